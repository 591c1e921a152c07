"""
What integer storage does to null z-scores
==========================================

Stores one million null p-values with each p-type and T-type scheme, converts
them back to z-scores and fits a single normal to the finite ones.
"""

# %%

from ebfdr import (QuantizationScheme, RngStream, collect_zscores, fit_normal_ml, norm_sf,
                   truncated_null_variance, truncation_bound)
from ebfdr.encoding import p_type_encode, t_type_encode

t = RngStream(2024).generator().standard_normal(1_000_000)
p = norm_sf(t)

# %%
# p-type storage rounds p onto a grid of 2^gamma - 1 steps. The end levels are
# exactly 0 and 1, which become infinite z-scores.
for label in ("none", "p8", "p9", "p16", "p17", "t7", "t8", "t15", "t16"):
    s = QuantizationScheme.parse(label)
    if s.gamma is None:
        stored = p
    elif label.startswith("p"):
        stored = p_type_encode(p, s.gamma)
    else:
        stored = norm_sf(t_type_encode(t, s.gamma)[0])
    zs = collect_zscores(stored)
    mu, var = fit_normal_ml(zs.finite)
    n_inf = zs.n_pos_inf + zs.n_neg_inf
    print(f"{label:>5}  infinite={n_inf:6d}  mu0={mu:+.4f}  var0={var:.4f}")

# %%
# Dropping the infinities leaves a normal truncated near +-a_gamma, whose
# variance is below 1. T-type storage keeps the tails and shows no bias.
for g in (8, 9, 16, 17):
    print(f"gamma={g:2d}  a={truncation_bound(g):.4f}  truncated variance={truncated_null_variance(g):.6f}")
