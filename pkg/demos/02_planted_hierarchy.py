"""Region-by-layer RSA curves on planted-structure data.

The synthetic generator plants a visual-hierarchy analogue: low-level
voxels carry a detail factor that dominates early embedding layers, and
high-level voxels carry a semantic factor that dominates late layers
(the final layer is purely semantic). Comparing region RDMs against each
layer's RDM recovers that structure as two crossing similarity curves.
"""

from voxalign import SynthConfig, region_layer_rsa, synth_generate

dataset = synth_generate(SynthConfig(n_train=96, n_test=32, seed=0))
mask = dataset.mask

regions = [
    ("low_level", dataset.voxels[:, mask.low_indices]),
    ("high_level", dataset.voxels[:, mask.high_indices]),
]
rows = region_layer_rsa(regions, dataset.layers, mode="raw")

print(f"{dataset.n} stimuli, {mask.n_low} low-level + {mask.n_semantic} high-level voxels")
print()
print("layer   alpha(detail weight)   low_level RSA   high_level RSA")
by_region = {name: {r.layer: r.similarity for r in rows if r.region == name}
             for name, _ in regions}
alphas = [float(a) for a in dataset.meta["alpha_schedule"].split(",")]
for layer_id, alpha in zip(dataset.layers.layer_ids, alphas):
    low = by_region["low_level"][layer_id]
    high = by_region["high_level"][layer_id]
    print(f"{layer_id:5d}   {alpha:20.2f}   {low:13.3f}   {high:14.3f}")

print()
print("Low-level regions peak on the earliest (detail-heavy) layers;")
print("high-level regions peak on the final (purely semantic) layer.")
