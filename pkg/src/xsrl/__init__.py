"""Cross-lingual end-to-end semantic role labeling on a small numpy autodiff core."""

__version__ = "0.1.0"
