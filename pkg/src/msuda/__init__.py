"""Multi-source unsupervised domain adaptation with adaptive source weighting.

A labeled collection of source domains and one unlabeled target domain are
aligned by adversarial feature learning; each source's contribution is
weighted by how small its estimated margin-disparity discrepancy to the
target is.
"""

__version__ = "0.1.0"
