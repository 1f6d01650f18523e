"""
Ethnicity structure at seven and two clusters
=============================================

Impostor pairs from the same ethnic group score a little higher than other
impostor pairs. Cutting a Ward tree into seven clusters shows how the groups
distribute; restricting to the two largest groups and cutting into two
shows how cleanly they separate.
"""
from scoreclust import (SynthConfig, cluster, composition, cut_k, generate, purity, subset,
                        to_distance)

cfg = SynthConfig(n_subjects=120, images_per_subject=6, same_group_bonus=0.1, seed=4)
sim, meta = generate(cfg)
print("images per ethnicity:", meta.counts("ethnicity"))

tree = cluster(to_distance(sim), "ward")
for label, hist in enumerate(composition(cut_k(tree, 7), meta, "ethnicity")):
    print(f"cluster {label}: {hist}")

# the two largest groups on their own
two = subset(sim, lambda row: row.ethnicity in ("white", "asian"), meta)
report = purity(cut_k(cluster(to_distance(two), "ward"), 2), meta, "ethnicity")
print()
print(report.format_table())
