"""Qt attention viewer."""
