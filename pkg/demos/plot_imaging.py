"""
Sparse decomposition and convolution features
=============================================

Green channel, patch-wise OMP coding, frozen convolution features and
feature fusion on a synthetic image.
"""

import numpy as np

from chd import imaging as im
from chd.pipeline import synthetic_image

image = synthetic_image(32, seed=0)
green = im.extract_channel(image, "green")

###############################################################################
# Each 8x8 patch is coded with at most four DCT atoms.  Whatever the code
# misses lands in the residual, and the two parts add back to the input.

csid = im.csid_decompose(green, im.dct_dictionary(8, 16), k=4, tau=0.05, patch=(8, 8))
print(np.array_equal(csid.sparse + csid.residual, green.plane))
print("energy in sparse part:", float(np.sum(csid.sparse**2) / np.sum(green.plane**2)))

###############################################################################
# A small random convolution stack, cut after its second layer, turns each
# plane into a feature vector.  The vectors are concatenated.

stack = im.random_stack(1, (4, 8), kernel=3, seed=0, depth_kernel=1)
parts = [im.transfer_features(im.Volume(p), stack, 1, name)
         for name, p in (("green", green.plane), ("sparse", csid.sparse), ("residual", csid.residual))]
fused = im.fuse_concat(parts)
print(len(fused), fused.segments)
