"""Line-based ``key = value`` experiment configuration.

Example::

    # synthetic sweep over condition numbers
    ground_truth = synthetic
    n1 = 20
    n2 = 400
    n3 = 20
    r = 4
    kappa = 1, 2, 4
    seed = 0, 1, 2
    m0 = 200
    mc = 100
    variant = pgd, scaled_pgd
    init = spectral
    T = 300
    stop_tol = 1e-6

Recognized keys: ``n1 n2 n3 r kappa seed m0 mc variant init c_eta trunc_C
split T stop_tol ground_truth`` plus ``mu`` (defaults to the estimated
incoherence of the truth), ``x_norm`` (``truth``, ``estimate`` or a number),
``init_basis`` (``svd`` or ``qr``), ``nested`` (``true``/``false``, see
:class:`tubalcs.recovery.SolverConfig`), ``timing`` (``true``/``false``) and
``out``.  ``ground_truth`` is ``synthetic`` or ``file:<path>``.
"""

from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ParseError, ValidationError
from ..recovery import INITS, VARIANTS

_INT_KEYS = ("n1", "n2", "n3", "r", "m0", "mc", "T")
_KNOWN = set(_INT_KEYS) | {
    "kappa", "seed", "variant", "init", "c_eta", "trunc_C", "split", "stop_tol",
    "ground_truth", "mu", "x_norm", "init_basis", "nested", "timing", "out",
}
_BOOL = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


@dataclass
class RunSpec:
    variant: str
    kappa: float
    seed: int


@dataclass
class ExperimentConfig:
    r: int
    m0: int
    mc: int
    seeds: list
    n1: int = None
    n2: int = None
    n3: int = None
    kappas: list = field(default_factory=lambda: [1.0])
    variants: list = field(default_factory=lambda: ["scaled_pgd"])
    ground_truth: str = "synthetic"
    init: str = "spectral"
    c_eta: float = 0.8
    trunc_C: float = 9.0
    split: bool = False
    nested: bool = False
    T: int = 100
    stop_tol: float = None
    mu: float = None
    x_norm: str = "truth"
    init_basis: str = "svd"
    timing: bool = True
    out: str = "results"

    @property
    def truth_path(self):
        if self.ground_truth.startswith("file:"):
            return Path(self.ground_truth[len("file:"):])
        return None

    def runs(self):
        kappas = self.kappas if self.truth_path is None else [None]
        return [RunSpec(v, k, s) for k in kappas for v in self.variants for s in self.seeds]


def _split_list(value):
    return [item.strip() for item in value.split(",") if item.strip()]


def parse_config(text):
    """Parse and validate a config; collects every problem before raising."""
    raw, problems = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN:
            problems.append(f"line {lineno}: unknown key {key!r}")
        elif key in raw:
            problems.append(f"line {lineno}: duplicate key {key!r}")
        elif not value:
            problems.append(f"line {lineno}: empty value for {key!r}")
        else:
            raw[key] = (lineno, value)
    if problems:
        raise ParseError(problems)
    return _build(raw)


def _build(raw):
    errors, values = [], {}

    def convert(key, fn, what):
        lineno, value = raw[key]
        try:
            return fn(value)
        except (ValueError, KeyError):
            errors.append(f"line {lineno}: {key} must be {what}, got {value!r}")
            return None

    for key in _INT_KEYS:
        if key in raw:
            values[key] = convert(key, int, "an integer")
    if "kappa" in raw:
        values["kappas"] = convert("kappa", lambda v: [float(x) for x in _split_list(v)], "a list of numbers")
    if "seed" in raw:
        values["seeds"] = convert("seed", lambda v: [int(x) for x in _split_list(v)], "a list of integers")
    if "variant" in raw:
        values["variants"] = _split_list(raw["variant"][1])
    for key, dest in (("c_eta", "c_eta"), ("trunc_C", "trunc_C"), ("stop_tol", "stop_tol"), ("mu", "mu")):
        if key in raw:
            values[dest] = convert(key, float, "a number")
    for key in ("split", "nested", "timing"):
        if key in raw:
            values[key] = convert(key, lambda v: _BOOL[v.lower()], "true or false")
    for key in ("init", "ground_truth", "x_norm", "init_basis", "out"):
        if key in raw:
            values[key] = raw[key][1]

    synthetic = values.get("ground_truth", "synthetic") == "synthetic"
    required = ["r", "m0", "mc", "seeds"] + (["n1", "n2", "n3"] if synthetic else [])
    for key in required:
        if key not in values:
            errors.append(f"missing required field {'seed' if key == 'seeds' else key!r}")

    gt = values.get("ground_truth", "synthetic")
    if gt != "synthetic" and not gt.startswith("file:"):
        errors.append(f"ground_truth must be 'synthetic' or 'file:<path>', got {gt!r}")
    for v in values.get("variants") or []:
        if v not in VARIANTS:
            errors.append(f"unknown variant {v!r} (choose from {', '.join(VARIANTS)})")
    if "variants" in values and not values["variants"]:
        errors.append("variant list is empty")
    if values.get("init", "spectral") not in INITS[:2]:
        errors.append(f"init must be 'spectral' or 'random', got {values['init']!r}")
    if values.get("init_basis", "svd") not in ("svd", "qr"):
        errors.append(f"init_basis must be 'svd' or 'qr', got {values['init_basis']!r}")
    xn = values.get("x_norm", "truth")
    if xn not in ("truth", "estimate"):
        try:
            float(xn)
        except ValueError:
            errors.append(f"x_norm must be 'truth', 'estimate' or a number, got {xn!r}")
    for key in ("n1", "n2", "n3", "r", "m0", "mc"):
        if values.get(key) is not None and values[key] < 1:
            errors.append(f"{key} must be positive")
    if values.get("T") is not None and values["T"] < 0:
        errors.append("T must be nonnegative")
    if values.get("seeds") == []:
        errors.append("seed list is empty")
    if any(s < 0 for s in values.get("seeds") or []):
        errors.append("seeds must be nonnegative")
    if any(k < 1 for k in values.get("kappas") or []):
        errors.append("every kappa must be >= 1")
    c_eta = values.get("c_eta")
    if c_eta is not None and not 0 < c_eta <= 0.9:
        errors.append(f"c_eta must lie in (0, 0.9], got {c_eta}")
    if values.get("split") and values.get("nested"):
        errors.append("split and nested are exclusive")
    r = values.get("r")
    if synthetic and r and values.get("n1") and values.get("n2") and r > min(values["n1"], values["n2"]):
        errors.append("r must not exceed min(n1, n2)")

    if errors:
        raise ValidationError(errors)
    return ExperimentConfig(**{k: v for k, v in values.items() if v is not None})
