"""Single-source cross-modality 2D segmentation.

Style augmentation via monotonic intensity curves, a dual-normalization
U-Net, and test-time style-based normalization-path selection.
"""

__version__ = "0.1.0"

from dnseg.domains import BRANCHES, DomainTag

__all__ = ["BRANCHES", "DomainTag", "__version__"]
