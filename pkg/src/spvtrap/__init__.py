"""Surface photovoltage and trapped-ion qubit dynamics toolkit."""

__version__ = "0.1.0"
