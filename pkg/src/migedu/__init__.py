"""Internal migration and education indicators from census microdata."""

__version__ = "0.1.0"
