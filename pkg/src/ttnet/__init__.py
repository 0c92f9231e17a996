"""Truth-table convolutional networks: training, exact logic compilation,
rule extraction and SAT-based robustness verification."""

__version__ = "0.1.0"
