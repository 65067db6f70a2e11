"""Command-line interface, file formats, synthetic data and experiments."""
