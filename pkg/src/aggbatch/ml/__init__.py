"""Model front-ends that phrase their data access as aggregate batches."""

from .cart import CartModel, train_cart
from .features import FeatureIndex, assemble_sigma, gen_sigma_batch
from .linreg import LinregModel, bgd_train, train_linreg
from .rkmeans import RkmeansModel, nearest_centroid, train_rkmeans, weighted_lloyd

__all__ = [
    "CartModel",
    "FeatureIndex",
    "LinregModel",
    "RkmeansModel",
    "assemble_sigma",
    "bgd_train",
    "gen_sigma_batch",
    "nearest_centroid",
    "train_cart",
    "train_linreg",
    "train_rkmeans",
    "weighted_lloyd",
]
