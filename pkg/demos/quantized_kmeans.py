"""Cluster data from a one-bit sketch collected on several nodes.

Each node quantizes its random projections to the signs of their cosine and
sine, so a sample costs 2m bits.  The node sketches are summed, rescaled by
1/F_1 and handed to the same CLOMPR solver that works on ordinary random
Fourier feature sketches.  The result is compared with Lloyd's algorithm
run on the full dataset.
"""

import numpy as np

from acl.evaluation import generate_gmm_data, kmeans_baseline, sse
from acl.features import FrequencySampler, kernel_scale_preset, make_feature_map
from acl.models import Box
from acl.sketch import simulate_nodes, sketch_dataset
from acl.solver import SolverOptions, TaskSpec, cost, solve

K, d, n = 5, 3, 20_000
X, truth = generate_gmm_data(K, d, n, separation=4.0, seed=0)
box = Box.from_data(X)
m = 10 * K * d

sampler = FrequencySampler.from_kernel_scale("folded_gaussian", kernel_scale_preset("kmeans", d), d)
phi = make_feature_map(sampler, m, "exp", omega_seed=1, dither_seed=2)
psi = phi.with_nonlinearity("quantized", renormalize=True)

z_q, bits = simulate_nodes(psi, X, nodes=8)
z_rff = sketch_dataset(phi, X)
print(f"n={n}, m={m}: the quantized sketch used {bits} bits in total, {bits // n} per sample")
print(f"distance between the quantized and RFF sketches: {np.linalg.norm(z_q.values - z_rff.values):.4f}")

task = TaskSpec("kmeans", K, box)
opts = SolverOptions(seed=0)
from_bits = solve(z_q, phi, task, opts)
from_rff = solve(z_rff, phi, task, opts)
lloyd = kmeans_baseline(X, K, restarts=10, seed=0)

print()
print(f"{'method':<22}{'SSE / n':>12}{'sketch cost':>14}")
for name, model in (("CLOMPR, quantized", from_bits), ("CLOMPR, RFF", from_rff), ("Lloyd, full data", lloyd)):
    print(f"{name:<22}{sse(model, X) / n:>12.5f}{cost(phi, z_rff, model):>14.5f}")

print()
print("true means and the nearest centroid learned from the one-bit sketch:")
for mu in truth.means:
    c = from_bits.centroids[np.argmin(np.linalg.norm(from_bits.centroids - mu, axis=1))]
    print(f"  {np.round(mu, 3)}  ->  {np.round(c, 3)}")
