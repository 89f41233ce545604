#!/usr/bin/env python3
"""
Full-scale preset runs (M=100, N=1000, 10,000 iterations).

These take minutes; run them with ``pytest -m slow``.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.artifacts import compare_price_files, read_report
from src.config import WELL_HIGH, WELL_LOW, apply_overrides, preset_config
from src.runner import run_experiment
from src.scripts.price_mfg import EXIT_OK, main


pytestmark = pytest.mark.slow


def run_preset(tmp_path, name, backend='adjoint', label='', **overrides):
    config = apply_overrides(preset_config(name), backend=backend, **overrides)
    out = tmp_path / f"{name}_{backend}{label}"
    out.mkdir()
    return run_experiment(config, out), out


def test_case_one_matches_closed_form(tmp_path):
    out = tmp_path / "case1"
    assert main(['run', '--preset', 'case1', '--out', str(out)]) == EXIT_OK
    report = read_report(out / "report.json")
    assert report['linf_omega_error'] <= 1e-6
    assert report['linf_trajectory_error'] <= 1e-6
    assert report['clearing_residual_sup'] <= 1e-6


def test_case_one_backends_agree(tmp_path):
    _, tape = run_preset(tmp_path, 'case1', backend='tape')
    _, adjoint = run_preset(tmp_path, 'case1', backend='adjoint')
    assert compare_price_files(tape / "omega.csv", adjoint / "omega.csv").linf <= 1e-10


def test_case_one_is_deterministic(tmp_path):
    _, first = run_preset(tmp_path, 'case1', label='_first')
    _, second = run_preset(tmp_path, 'case1', label='_second')
    assert (first / "omega.csv").read_bytes() == (second / "omega.csv").read_bytes()


def test_case_two_matches_closed_form(tmp_path):
    report, _ = run_preset(tmp_path, 'case2')
    assert report['supply_seed'] == 0
    assert report['linf_omega_error'] <= 1e-2
    assert report['linf_trajectory_error'] <= 5e-3
    assert report['linf_regular_part_error'] <= 1e-2
    assert report['clearing_residual_sup'] <= 1e-6


def test_case_three_splits_into_two_clusters(tmp_path):
    report, _ = run_preset(tmp_path, 'case3')
    clusters = report['terminal_clusters']
    low, high = clusters['counts'][repr(WELL_LOW)], clusters['counts'][repr(WELL_HIGH)]
    assert clusters['outside'] == 0
    assert low + high == 100
    assert low > 0
    assert high > low


def test_case_four_b_collapses_to_upper_well(tmp_path):
    report, _ = run_preset(tmp_path, 'case4b')
    clusters = report['terminal_clusters']
    assert clusters['counts'][repr(WELL_HIGH)] == 100
    assert clusters['outside'] == 0
    assert report['supply_seed'] == preset_config('case4b').supply.seed


def test_case_four_a_runs(tmp_path):
    report, _ = run_preset(tmp_path, 'case4a')
    assert report['status'] == 'ok'
    assert np.isfinite(report['clearing_residual_sup'])
