"""Group the components of a multi-order bank by split lineage.

Components descending from the same branch of the split tree get the same
group, so each group sees a coherent region of the feature space.  Random
grouping is the baseline alternative.  The concatenated multi-order LGP
matrix is then sliced per group for the per-group network branches.
"""
import numpy as np

from lgpnet import (
    EmConfig,
    FeatureMatrix,
    GmmBank,
    extract_multiscale_lgp,
    group_slices,
    lineage_grouping,
    random_grouping,
    train_by_splitting,
)

rng = np.random.default_rng(2)
data = np.vstack([rng.normal(loc=c, scale=0.5, size=(300, 3)) for c in (-4.0, 0.0, 4.0)])

models = train_by_splitting(data, 32, EmConfig(n_iterations=8))
bank = GmmBank(gmms=[m for m in models if m.order in (8, 16, 32)])
print(f"bank orders: {bank.orders}, total components: {bank.total_components}")

lineage = lineage_grouping(bank, 4)
rand = random_grouping(bank, 4, seed=0)
print("\norder 8 lineage groups:", lineage.groups[8])
print("order 8 random groups: ", rand.groups[8])
print("lineage keeps split siblings together; random scatters them")

feat = FeatureMatrix(values=rng.normal(size=(50, 3)))
lgp = extract_multiscale_lgp(bank, feat)
print(f"\nmulti-order LGP: {lgp.values.shape} (frames x {8}+{16}+{32} dims)")

slices = group_slices(lineage, lgp)
print(f"{len(slices)} group slices of shape {slices[0].values.shape}")
total = sum(s.n_dims for s in slices)
print(f"slice dims sum back to {total} = {bank.total_components}")
