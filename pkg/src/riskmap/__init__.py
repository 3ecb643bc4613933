"""Regional internet-finance panels embedded with t-SNE / PCA and tiered by k-means."""

__version__ = "0.1.0"
