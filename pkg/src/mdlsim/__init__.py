"""Mode-dependent loss estimation from MMSE MIMO equalizers, with SNR correction."""

__version__ = "0.1.0"
