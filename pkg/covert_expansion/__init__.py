# Covert secret-key expansion toolkit

__version__ = "1.0.0"
