"""In-memory batch evaluation of group-by SUM aggregates over a join tree,
with linear regression, regression tree, and grid-coreset k-means front ends
that run entirely on such batches."""

__version__ = "0.1.0"
