"""Package initialization for mean-field-game price formation."""
