"""Independent reference computations used as test oracles."""

import math
from itertools import product

import numpy as np

from pairnilm import mlp
from pairnilm.mlp import Network


def kappa_po_pe(counts):
    L = np.asarray(counts, dtype=np.float64)
    n = L.sum()
    p_o = np.trace(L) / n
    p_e = float(L.sum(axis=1) @ L.sum(axis=0)) / n**2
    if p_e == 1.0:
        return None
    return (p_o - p_e) / (1 - p_e)


def hand_forward(w1, b1, w2, b2, x):
    """Scalar loops through tanh then softmax."""
    h = [math.tanh(sum(w1[k][i] * x[i] for i in range(len(x))) + b1[k]) for k in range(len(b1))]
    z = [sum(w2[o][k] * h[k] for k in range(len(h))) + b2[o] for o in range(2)]
    e = [math.exp(v - max(z)) for v in z]
    return e[0] / sum(e), e[1] / sum(e)


def max_gradient_error(net: Network, X, T, step=1e-6):
    """Max relative error of the analytic gradient against central differences."""
    _, grad = mlp.loss_and_gradient(net, X, T)
    theta = net.flat()
    d, h = net.input_dim, net.hidden_dim
    numeric = np.empty_like(theta)
    for k in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[k] += step
        dn[k] -= step
        f_up = mlp.mean_loss(Network.from_flat(up, d, h), X, T)
        f_dn = mlp.mean_loss(Network.from_flat(dn, d, h), X, T)
        numeric[k] = (f_up - f_dn) / (2 * step)
    scale = np.maximum(np.maximum(np.abs(grad), np.abs(numeric)), 1e-4)
    return float(np.max(np.abs(grad - numeric) / scale))


def brute_votes(P, present, rule):
    """Loop-by-loop vote totals from a dense score table."""
    M = len(P)
    totals = []
    for i in range(M):
        s = 0.0
        for j in range(M):
            if i == j or not present[i][j]:
                continue
            if rule == "weighted":
                s += P[i][j]
            else:
                s += 1.0 if P[i][j] > P[j][i] else 0.0
        totals.append(s)
    return totals


def brute_winner(totals):
    best = max(totals)
    for i, t in enumerate(totals):
        if t == best:
            return i


def random_table(rng, M, omit_prob=0.0):
    """Score table with complement entries and optional omitted pairs."""
    P = np.zeros((M, M))
    present = np.zeros((M, M), dtype=bool)
    for i, j in product(range(M), repeat=2):
        if i < j and rng.random() >= omit_prob:
            # coarse values make exact ties likely
            p = rng.choice([rng.random(), round(rng.random(), 1)])
            P[i, j], P[j, i] = p, 1 - p
            present[i, j] = present[j, i] = True
    return P, present
