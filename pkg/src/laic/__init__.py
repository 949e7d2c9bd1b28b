"""Language-assisted image clustering over precomputed embedding matrices.

The pipeline turns a frozen vision-language embedding of a dataset into a
clustering: select dataset-specific candidate nouns, build an image-text
representation by closed-form ridge regression, filter pseudo-labels by
neighbor consistency, optimize per-cluster semantic centers, and evaluate
with NMI / ACC / ARI.
"""

__version__ = "0.1.0"
