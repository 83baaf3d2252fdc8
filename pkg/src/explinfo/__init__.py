"""explinfo: information scores for text explanations.

Quantifies how much an explanation carries about the input it explains
(relevance, a contrastive mutual-information lower bound) and about the
predicted label (informativeness, predictive usable information), plus
the reference labels, statistics, and pipeline plumbing around them.
"""

__version__ = "0.1.0"

from explinfo._kernels import BACKEND_NAME as kernel_backend_name

__all__ = ["__version__", "kernel_backend_name"]
