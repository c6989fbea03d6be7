"""Vertical federated gradient boosting with cipher-level optimizations.

A guest party holding labels and one or more host parties holding disjoint
feature sets jointly train histogram-based GBDT models.  Host-side statistics
travel under additively homomorphic Paillier encryption; plaintext-space
packing, sibling histogram subtraction and ciphertext compression keep the
cipher workload small.
"""

__version__ = "0.1.0"
