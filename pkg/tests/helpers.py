"""Shared test utilities: central finite differences and gradient agreement."""

import torch


def finite_difference(closure, tensor, index, eps=1e-6):
    """Central-difference derivative of the scalar closure w.r.t. one entry."""
    with torch.no_grad():
        orig = tensor[index].item()
        tensor[index] = orig + eps
        hi = float(closure())
        tensor[index] = orig - eps
        lo = float(closure())
        tensor[index] = orig
    return (hi - lo) / (2 * eps)


def assert_grad_matches_fd(closure, tensor, indices, rtol=1e-4, atol=1e-8, eps=1e-6):
    """Analytic gradient of closure() w.r.t. tensor entries vs central
    differences, at float64 precision.

    Central differences are only a valid oracle where the function is locally
    smooth; an entry whose stencil straddles a ReLU kink is detected by
    re-evaluating at eps/8 and skipped (the two estimates disagree there).
    At least one sampled entry must be smooth.
    """
    loss = closure()
    (grad,) = torch.autograd.grad(loss, tensor, retain_graph=False)
    checked = 0
    for index in indices:
        analytic = float(grad[index])
        numeric = finite_difference(closure, tensor, index, eps)
        refined = finite_difference(closure, tensor, index, eps / 8)
        if abs(numeric - refined) > 1e-5 * max(abs(numeric), abs(refined), 1.0):
            continue  # stencil crosses a kink, fd estimate unreliable
        checked += 1
        tol = rtol * max(abs(analytic), abs(numeric)) + atol
        assert abs(analytic - numeric) <= tol, (
            f"gradient mismatch at {index}: analytic {analytic:.10g} "
            f"vs finite-difference {numeric:.10g}")
    assert checked > 0, "all sampled entries sat on kinks; re-seed the test"


def sample_indices(shape, count, rng):
    """Deterministic multi-indices into a tensor of the given shape."""
    idx = []
    numel = 1
    for s in shape:
        numel *= s
    flat = rng.choice(numel, size=min(count, numel), replace=False)
    for f in flat:
        multi = []
        rem = int(f)
        for s in reversed(shape):
            multi.append(rem % s)
            rem //= s
        idx.append(tuple(reversed(multi)))
    return idx
