"""Data-quality techniques for dyadic image authorship ranking.

Upload histories of (user, item, image, review) interactions are noisy on
both sides of the label: most users are cold-start, and "negative" images
are merely unlabeled.  This package improves the training data itself —
prototype-based reliable-negative selection, transform-based image
augmentation, and prompt-driven generative augmentation — and measures the
effect on authorship-ranking models with a leave-one-out protocol plus
energy/emission accounting.
"""

__version__ = "0.1.0"
