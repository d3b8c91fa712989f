"""Critical points of Euclidean distance functions."""
