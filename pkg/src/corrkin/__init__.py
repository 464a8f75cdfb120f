"""Formation of correlations and nonlocal kinetic corrections in plasmas."""

__version__ = "0.1.0"
