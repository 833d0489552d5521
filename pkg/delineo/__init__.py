from .core import Grid, MarginVector, BinaryMask, make_mask
