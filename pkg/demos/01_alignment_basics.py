"""Representational alignment measures on small synthetic matrices.

Walks through the two families of similarity measures the library is
built around: CKA (kernel alignment of two representations) and RSA
(rank agreement of two dissimilarity structures), showing the invariances
that make them useful for comparing embeddings that live in different
coordinate systems.
"""

import numpy as np

from voxalign import cka, hsic, rdm_from_features, rsa
from voxalign.rng import Rng

rng = Rng(0, "demo-alignment")

# Two views of the same 8 stimuli: B is A rotated and rescaled.
a = rng.child("a").normal(8, 5)
q, _ = np.linalg.qr(rng.child("q").normal(5, 5))
b = 3.0 * a @ q

print("HSIC(a, a)          =", f"{hsic(a, a):.4f}")
print("HSIC(a, rotated a)  =", f"{hsic(a, b):.4f}")
print("CKA(a, rotated a)   =", f"{cka(a, b):.6f}   (1: same representation geometry)")

c = rng.child("c").normal(8, 5)
print("CKA(a, unrelated c) =", f"{cka(a, c):.6f}")

# RSA compares dissimilarity structure instead of the raw features.
rdm_a = rdm_from_features(a)
rdm_b = rdm_from_features(b + 0.05 * rng.child("noise").normal(8, 5))
rdm_c = rdm_from_features(c)

print()
print("RDM diagonal is exactly zero:", np.all(rdm_a.values.diagonal() == 0.0))
print("RSA(a, noisy rotated a) =", f"{rsa(rdm_a, rdm_b):.4f}")
print("RSA(a, unrelated c)     =", f"{rsa(rdm_a, rdm_c):.4f}")
