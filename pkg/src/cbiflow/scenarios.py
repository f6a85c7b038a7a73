"""Scenario files: JSON bundles of (psi, phi, x0, lambda0, overrides).

A scenario pins everything the CLI needs to rebuild a model. Example:

    {"psi": {"kind": "stable", "d": 1.0, "alpha": 0.5},
     "phi": {"kind": "stable", "d_prime": 1.0, "beta_idx": 0.8},
     "x0": 1.0}

psi kinds:  quadratic {b, sigma} | quadratic_logistic {} |
            stable {d, alpha} | general {b, sigma, pi_bar}
phi kinds:  linear {beta0} | stable {d_prime, beta_idx} |
            tailspec {beta0, nu_bar}
tails:      "one_over_log" | "one_over_log_loglog" |
            {"name": "c_over_log", "c": 2.0} |
            {"name": "point_mass", "z": 2.0, "mass": 0.5} |
            {"name": "table", "points": [[x, nu_bar(x)], ...]}
overrides:  {"s_threshold": ..., "f_threshold": ...} (regime classifier
            thresholds; everything else in the pipeline is
            accuracy-critical and not scenario-tunable)

Unknown keys are rejected at every level: a typo must fail loudly, not
silently fall back to a default. parse/serialize round-trip exactly and
the fingerprint hashes the canonical serialized form.
"""

import hashlib
import json
import math

from .errors import DomainError, ScenarioError
from .mechanisms import (BranchingMechanism, ImmigrationMechanism,
                         PiecewiseConstantTail, PointMassTail,
                         make_builtin_tail)

_PSI_KEYS = {
    "quadratic": {"b", "sigma"},
    "quadratic_logistic": set(),
    "stable": {"d", "alpha"},
    "general": {"b", "sigma", "pi_bar"},
}
_PHI_KEYS = {
    "linear": {"beta0"},
    "stable": {"d_prime", "beta_idx"},
    "tailspec": {"beta0", "nu_bar"},
}
_BUILTIN_TAILS = ("one_over_log", "one_over_log_loglog")
_OVERRIDE_KEYS = ("s_threshold", "f_threshold")


def _require_keys(doc, allowed, where):
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ScenarioError(
            "unknown %s key(s) %s; allowed: %s"
            % (where, ", ".join(repr(k) for k in unknown),
               ", ".join(sorted(allowed))))


def _number(doc, key, where, default=None):
    if key not in doc:
        if default is None:
            raise ScenarioError("%s needs a %r entry" % (where, key))
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) \
            or not math.isfinite(val):
        raise ScenarioError("%s %r must be a finite number, got %r"
                            % (where, key, val))
    return float(val)


def _parse_tail(doc, where):
    if isinstance(doc, str):
        if doc not in _BUILTIN_TAILS:
            raise ScenarioError(
                "%s tail %r is not a built-in; named built-ins: %s"
                % (where, doc, ", ".join(_BUILTIN_TAILS)))
        return make_builtin_tail(doc)
    if not isinstance(doc, dict):
        raise ScenarioError("%s tail must be a name or an object" % where)
    name = doc.get("name")
    if name == "c_over_log":
        _require_keys(doc, ("name", "c"), where + " tail")
        return make_builtin_tail("c_over_log", _number(doc, "c", where))
    if name == "point_mass":
        _require_keys(doc, ("name", "z", "mass"), where + " tail")
        return PointMassTail(_number(doc, "z", where),
                             _number(doc, "mass", where))
    if name == "table":
        _require_keys(doc, ("name", "points"), where + " tail")
        points = doc.get("points")
        if not isinstance(points, list) or not points or not all(
                isinstance(p, list) and len(p) == 2 for p in points):
            raise ScenarioError("%s table tail needs points [[x, value], "
                                "...]" % where)
        return PiecewiseConstantTail([(p[0], p[1]) for p in points])
    raise ScenarioError(
        "%s tail name %r not recognized (c_over_log, point_mass, table, "
        "or a built-in name string)" % (where, name))


def _tail_doc(tail, where):
    if tail.name in _BUILTIN_TAILS:
        return tail.name
    if tail.name in ("c_over_log", "point_mass", "table"):
        doc = {"name": tail.name}
        doc.update(tail.params())
        return doc
    raise ScenarioError(
        "%s tail %r is an analytic callable and cannot be serialized"
        % (where, tail.name))


def _parse_psi(doc):
    if not isinstance(doc, dict):
        raise ScenarioError("psi must be an object")
    kind = doc.get("kind")
    if kind not in _PSI_KEYS:
        raise ScenarioError("psi kind %r not recognized; allowed: %s"
                            % (kind, ", ".join(sorted(_PSI_KEYS))))
    _require_keys(doc, {"kind"} | _PSI_KEYS[kind], "psi")
    if kind == "quadratic":
        return BranchingMechanism.quadratic(
            _number(doc, "b", "psi", default=0.0),
            _number(doc, "sigma", "psi", default=0.0))
    if kind == "quadratic_logistic":
        return BranchingMechanism.quadratic_logistic()
    if kind == "stable":
        return BranchingMechanism.stable(
            _number(doc, "d", "psi", default=1.0),
            _number(doc, "alpha", "psi", default=0.5))
    pi_tail = None
    if "pi_bar" in doc:
        pi_tail = _parse_tail(doc["pi_bar"], "psi")
    return BranchingMechanism.general(_number(doc, "b", "psi", default=0.0),
                                      _number(doc, "sigma", "psi",
                                              default=0.0), pi_tail)


def _psi_doc(psi):
    if psi.kind == "quadratic":
        return {"kind": "quadratic", "b": psi.b, "sigma": psi.sigma}
    if psi.kind == "quadratic_logistic":
        return {"kind": "quadratic_logistic"}
    if psi.kind == "stable":
        return {"kind": "stable", "d": psi.d, "alpha": psi.alpha}
    doc = {"kind": "general", "b": psi.b, "sigma": psi.sigma}
    if psi.pi_tail is not None:
        doc["pi_bar"] = _tail_doc(psi.pi_tail, "psi")
    return doc


def _parse_phi(doc):
    if not isinstance(doc, dict):
        raise ScenarioError("phi must be an object")
    kind = doc.get("kind")
    if kind not in _PHI_KEYS:
        raise ScenarioError("phi kind %r not recognized; allowed: %s"
                            % (kind, ", ".join(sorted(_PHI_KEYS))))
    _require_keys(doc, {"kind"} | _PHI_KEYS[kind], "phi")
    if kind == "linear":
        return ImmigrationMechanism.linear(
            _number(doc, "beta0", "phi", default=1.0))
    if kind == "stable":
        return ImmigrationMechanism.stable(
            _number(doc, "d_prime", "phi", default=1.0),
            _number(doc, "beta_idx", "phi", default=0.5))
    if "nu_bar" not in doc:
        raise ScenarioError("phi tailspec needs a 'nu_bar' entry")
    return ImmigrationMechanism.tailspec(
        _number(doc, "beta0", "phi", default=0.0),
        _parse_tail(doc["nu_bar"], "phi"))


def _phi_doc(phi):
    if phi.kind == "linear":
        return {"kind": "linear", "beta0": phi.beta0}
    if phi.kind == "stable":
        return {"kind": "stable", "d_prime": phi.d_prime,
                "beta_idx": phi.beta_idx}
    return {"kind": "tailspec", "beta0": phi.beta0,
            "nu_bar": _tail_doc(phi.nu_bar, "phi")}


class Scenario:
    """A parsed scenario: mechanisms plus starting state and options."""

    def __init__(self, psi, phi, x0=0.0, lambda0=None, overrides=None):
        if x0 < 0:
            raise ScenarioError("x0 must be nonnegative")
        if lambda0 is not None and lambda0 <= 0:
            raise ScenarioError("lambda0 must be positive")
        overrides = dict(overrides) if overrides else {}
        _require_keys(overrides, _OVERRIDE_KEYS, "overrides")
        for key in overrides:
            overrides[key] = _number(overrides, key, "overrides")
        self.psi = psi
        self.phi = phi
        self.x0 = float(x0)
        self.lambda0 = None if lambda0 is None else float(lambda0)
        self.overrides = overrides

    def to_doc(self):
        """Canonical JSON-ready document (inverse of parse_scenario)."""
        doc = {"psi": _psi_doc(self.psi), "phi": _phi_doc(self.phi),
               "x0": self.x0}
        if self.lambda0 is not None:
            doc["lambda0"] = self.lambda0
        if self.overrides:
            doc["overrides"] = dict(sorted(self.overrides.items()))
        return doc

    def fingerprint(self):
        """Hash of the canonical serialized form, stable across runs."""
        blob = json.dumps(self.to_doc(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.to_doc() == other.to_doc()

    def __repr__(self):
        return "Scenario(%s)" % json.dumps(self.to_doc(), sort_keys=True)


def parse_scenario(doc):
    """Build a Scenario from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    _require_keys(doc, ("psi", "phi", "x0", "lambda0", "overrides"),
                  "scenario")
    for key in ("psi", "phi"):
        if key not in doc:
            raise ScenarioError("scenario needs a %r entry" % key)
    lambda0 = None
    if "lambda0" in doc and doc["lambda0"] is not None:
        lambda0 = _number(doc, "lambda0", "scenario")
    try:
        return Scenario(_parse_psi(doc["psi"]), _parse_phi(doc["phi"]),
                        x0=_number(doc, "x0", "scenario", default=0.0),
                        lambda0=lambda0, overrides=doc.get("overrides"))
    except ScenarioError:
        raise
    except DomainError as exc:
        raise ScenarioError("invalid scenario value: %s" % exc)


def serialize_scenario(scenario):
    """Canonical document for a Scenario; parse_scenario inverts it."""
    return scenario.to_doc()


def load_scenario(path):
    """Read and parse a scenario JSON file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioError("cannot read scenario file: %s" % exc)
    except json.JSONDecodeError as exc:
        raise ScenarioError("scenario file is not valid JSON: %s" % exc)
    return parse_scenario(doc)


def dump_scenario(scenario, path):
    """Write the canonical JSON form of a Scenario."""
    with open(path, "w") as fh:
        json.dump(scenario.to_doc(), fh, indent=2, sort_keys=True)
        fh.write("\n")
