"""LP-rounding algorithms for capacitated k-median."""
