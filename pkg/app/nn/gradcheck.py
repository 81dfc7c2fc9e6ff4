"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    tol: float
    errors: dict = field(default_factory=dict)
    checked: dict = field(default_factory=dict)

    @property
    def failures(self):
        return {name: err for name, err in self.errors.items() if err > self.tol}

    @property
    def passed(self):
        return not self.failures

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)


def relative_error(analytic, numeric, floor=1e-5):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(build_loss, named_params, h=1e-5, tol=1e-4, max_entries=None, seed=0,
                    floor=1e-5):
    """Compare backprop gradients against ``(f(θ+h) - f(θ-h)) / 2h``.

    ``build_loss`` must rebuild the scalar loss from the current parameter
    values on every call. With ``max_entries`` only a seeded sample of
    entries per parameter is perturbed.
    """
    named_params = list(named_params)
    for _, param in named_params:
        param.grad = None
    build_loss().backward()
    analytic = {name: (param.grad.copy() if param.grad is not None else np.zeros(param.shape))
                for name, param in named_params}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol)
    for name, param in named_params:
        flat = param.data.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        for i in indices:
            original = flat[i]
            flat[i] = original + h
            plus = build_loss().item()
            flat[i] = original - h
            minus = build_loss().item()
            flat[i] = original
            numeric = (plus - minus) / (2 * h)
            worst = max(worst, relative_error(analytic[name].reshape(-1)[i], numeric, floor))
        report.errors[name] = worst
        report.checked[name] = len(indices)
    return report
