"""Joint antenna selection and RIS passive beamforming for massive MIMO."""

__version__ = "0.1.0"
