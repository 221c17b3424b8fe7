"""Pure-numpy MLP kernels; the fallback when the compiled core is unavailable.

Parameters live in one flat float64 vector.  Layer ``l`` maps ``dims[l]`` to
``dims[l+1]`` and stores its weight matrix row-major (``dims[l] x dims[l+1]``)
followed by its bias.  Hidden layers use ReLU; the head is a softmax whose
output is clamped to ``[eps, 1]`` and renormalized.
"""

import numpy as np

BACKEND = "numpy"


def _unpack(params, dims):
    out, off = [], 0
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        W = params[off : off + n_in * n_out].reshape(n_in, n_out)
        off += n_in * n_out
        b = params[off : off + n_out]
        off += n_out
        out.append((W, b))
    return out


def _forward(layers, X, eps):
    # Overflow only occurs on a diverged run; the trainer detects that from the non-finite loss.
    with np.errstate(over="ignore", invalid="ignore"):
        acts, pre = [X], []
        a = X
        for i, (W, b) in enumerate(layers):
            z = a @ W + b
            pre.append(z)
            a = np.maximum(z, 0.0) if i < len(layers) - 1 else z
            acts.append(a)
        z = acts[-1]
        e = np.exp(z - z.max(axis=1, keepdims=True))
        s = e / e.sum(axis=1, keepdims=True)
        pc = np.maximum(s, eps)
        S = pc.sum(axis=1, keepdims=True)
    return acts, pre, s, pc / S, S


def predict_probs(params, dims, X, eps):
    layers = _unpack(np.asarray(params, dtype=float), [int(d) for d in dims])
    return _forward(layers, np.asarray(X, dtype=float), eps)[3]


def batch_loss_grad(params, dims, X, W, M, eps):
    """Mean over the batch of ``-sum_k W[n,k] log((p_n M)_k)`` and its exact gradient."""
    params = np.asarray(params, dtype=float)
    dims = [int(d) for d in dims]
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    B = X.shape[0]
    layers = _unpack(params, dims)
    acts, pre, s, p, S = _forward(layers, X, eps)

    q = p if M is None else p @ M
    if np.any((q <= 0) & (W != 0)):
        raise ValueError("non-positive mixed probability in forward-corrected loss")
    with np.errstate(divide="ignore"):
        logq = np.where(W != 0, np.log(np.where(q > 0, q, 1.0)), 0.0)
    loss = float(-(W * logq).sum() / B)

    gq = np.where(W != 0, -W / np.where(q > 0, q, 1.0), 0.0)
    gp = gq if M is None else gq @ M.T
    # Renormalization, then the clamp acts as a stop-gradient where s < eps.
    gpc = (gp - (gp * p).sum(axis=1, keepdims=True)) / S
    gs = np.where(s >= eps, gpc, 0.0)
    gz = s * (gs - (gs * s).sum(axis=1, keepdims=True))
    gz /= B

    grads = []
    for i in range(len(layers) - 1, -1, -1):
        Wl, _ = layers[i]
        a_in = acts[i]
        grads.append((a_in.T @ gz, gz.sum(axis=0)))
        if i > 0:
            gz = (gz @ Wl.T) * (pre[i - 1] > 0)
    flat = []
    for gW, gb in reversed(grads):
        flat.append(gW.ravel())
        flat.append(gb)
    return loss, np.concatenate(flat)
