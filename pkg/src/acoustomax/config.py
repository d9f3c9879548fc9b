"""Scenario configuration: JSON parsing, validation, canned scenarios.

A scenario document fully describes one experiment::

    {
      "mesh": {"refinement": 4, "radius": 1.0},        # or {"path": "..."}
      "medium": {
        "omega": 3.141592653589793, "impedance": 1.0, "mu_r": 1.0,
        "background": {"eps_r": 37.2, "sigma": 0.5},
        "regions": [
          {"shape": "disk", "center": [0.0, 0.45], "radius": 0.25,
           "eps_r": 7.79, "sigma": 0.1},
          {"shape": "polygon", "vertices": [[...], ...],
           "eps_r": 20.0, "sigma": 0.2}
        ],
        "gammas": {"eps": 0.25, "sigma": 0.35, "J": 0.0},
        "bounds": {"K1": 100.0, "K2": 0.01}
      },
      "source": {"bumps": [
        {"center": [-0.15, -0.1], "radius": 0.5,
         "amplitude_re": [1.0, 0.0], "amplitude_im": [0.0, 0.0]}
      ]},
      "internal": {"mode": "direct", "cond_threshold": 1e8,
                   "sweep": {"k_max": 18.85, "dk": 2.617, "delta": 1e-3,
                             "support_radius": 1.0, "grid_step": 0.02}},
      "noise": {"level": 0.001, "seed": 7},
      "case": "auto",
      "output_dir": "out"
    }

Validation enforces the model assumptions (coefficient bounds, compact
source support with a 0.05 cm margin, positive impedance, mu_r = 1) and
the Nyquist bound for measured mode.
"""

import json
from dataclasses import dataclass

import numpy as np

from .forward import (
    Gammas,
    MediumModel,
    Region,
    SourceBump,
    SourceModel,
    ValidationError,
)
from .internal import ModulationSweep


class ConfigError(ValidationError):
    """Scenario document failed to parse or validate."""


@dataclass
class MeshSpec:
    refinement: int = 4
    radius: float = 1.0
    path: str = None


@dataclass
class InternalSpec:
    mode: str = "direct"
    cond_threshold: float = 1e8
    sweep: ModulationSweep = None


@dataclass
class NoiseSpec:
    level: float = 0.0
    seed: int = 0


@dataclass
class ScenarioConfig:
    mesh: MeshSpec
    medium: MediumModel
    source: SourceModel
    internal: InternalSpec
    noise: NoiseSpec
    case: str = "auto"
    output_dir: str = "out"

    def validate(self):
        try:
            self.medium.validate()
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc
        domain_radius = self.mesh.radius if self.mesh.path is None else None
        if domain_radius is not None:
            try:
                self.source.validate(domain_radius)
            except ValidationError as exc:
                raise ConfigError(str(exc)) from exc
        if self.internal.mode not in ("direct", "measured"):
            raise ConfigError(f"internal mode must be direct|measured, "
                              f"got {self.internal.mode!r}")
        if self.internal.mode == "measured" and self.internal.sweep is None:
            raise ConfigError("measured mode requires internal.sweep parameters")
        if self.noise.level < 0:
            raise ConfigError(f"noise level must be nonnegative, got {self.noise.level}")
        if self.case not in ("auto", "I1", "II4"):
            raise ConfigError(f"case must be auto|I1|II4, got {self.case!r}")
        return self


def _require(doc, key, where):
    if key not in doc:
        raise ConfigError(f"missing key {key!r} in {where}")
    return doc[key]


def _region_from(doc, idx):
    shape = doc.get("shape", "disk")
    eps = _require(doc, "eps_r", f"regions[{idx}]")
    sig = _require(doc, "sigma", f"regions[{idx}]")
    if shape == "disk":
        return Region(eps, sig, "disk",
                      tuple(_require(doc, "center", f"regions[{idx}]")),
                      float(_require(doc, "radius", f"regions[{idx}]")))
    if shape == "polygon":
        verts = np.asarray(_require(doc, "vertices", f"regions[{idx}]"), float)
        return Region(eps, sig, "polygon", vertices=verts)
    raise ConfigError(f"regions[{idx}]: unknown shape {shape!r}")


def _bump_from(doc, idx):
    center = tuple(_require(doc, "center", f"bumps[{idx}]"))
    radius = float(_require(doc, "radius", f"bumps[{idx}]"))
    re = np.asarray(doc.get("amplitude_re", [0.0, 0.0]), float)
    im = np.asarray(doc.get("amplitude_im", [0.0, 0.0]), float)
    if re.shape != (2,) or im.shape != (2,):
        raise ConfigError(f"bumps[{idx}]: amplitudes must be 2-vectors")
    return SourceBump(center, radius, tuple(re + 1j * im))


def scenario_from_dict(doc):
    mdoc = doc.get("mesh", {})
    mesh = MeshSpec(
        refinement=int(mdoc.get("refinement", 4)),
        radius=float(mdoc.get("radius", 1.0)),
        path=mdoc.get("path"),
    )
    med = _require(doc, "medium", "scenario")
    bg = _require(med, "background", "medium")
    gdoc = _require(med, "gammas", "medium")
    bounds = med.get("bounds", {})
    medium = MediumModel(
        omega=float(_require(med, "omega", "medium")),
        impedance=float(med.get("impedance", 1.0)),
        mu_r=float(med.get("mu_r", 1.0)),
        background_eps=float(_require(bg, "eps_r", "medium.background")),
        background_sigma=float(_require(bg, "sigma", "medium.background")),
        gammas=Gammas(float(gdoc.get("eps", 0.0)), float(gdoc.get("sigma", 0.0)),
                      float(gdoc.get("J", 0.0))),
        regions=[_region_from(r, i) for i, r in enumerate(med.get("regions", []))],
        K1=float(bounds.get("K1", 100.0)),
        K2=float(bounds.get("K2", 0.01)),
    )
    sdoc = doc.get("source", {"bumps": []})
    source = SourceModel([_bump_from(b, i) for i, b in enumerate(sdoc.get("bumps", []))])
    idoc = doc.get("internal", {})
    sweep = None
    if "sweep" in idoc:
        sw = idoc["sweep"]
        try:
            sweep = ModulationSweep(
                k_max=float(_require(sw, "k_max", "internal.sweep")),
                dk=float(_require(sw, "dk", "internal.sweep")),
                delta=float(_require(sw, "delta", "internal.sweep")),
                support_radius=float(sw.get("support_radius", 1.0)),
                grid_step=float(sw.get("grid_step", 0.02)),
            )
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc
    internal = InternalSpec(
        mode=idoc.get("mode", "direct"),
        cond_threshold=float(idoc.get("cond_threshold", 1e8)),
        sweep=sweep,
    )
    ndoc = doc.get("noise", {})
    noise = NoiseSpec(level=float(ndoc.get("level", 0.0)),
                      seed=int(ndoc.get("seed", 0)))
    cfg = ScenarioConfig(
        mesh=mesh,
        medium=medium,
        source=source,
        internal=internal,
        noise=noise,
        case=doc.get("case", "auto"),
        output_dir=doc.get("output_dir", "out"),
    )
    return cfg.validate()


def load_scenario(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return scenario_from_dict(doc)


# ---------------------------------------------------------------------------
# canned scenarios
# ---------------------------------------------------------------------------

def tissue_phantom_medium(gammas):
    """Blood-background disk with fat/nerve/muscle inclusions."""
    return {
        "omega": float(np.pi),
        "impedance": 1.0,
        "mu_r": 1.0,
        "background": {"eps_r": 37.2, "sigma": 0.50},
        "regions": [
            {"shape": "disk", "center": [0.0, 0.45], "radius": 0.25,
             "eps_r": 7.79, "sigma": 0.10},
            {"shape": "disk", "center": [-0.45, -0.2], "radius": 0.25,
             "eps_r": 20.2, "sigma": 0.25},
            {"shape": "disk", "center": [0.45, -0.2], "radius": 0.25,
             "eps_r": 36.4, "sigma": 0.45},
        ],
        "gammas": gammas,
        "bounds": {"K1": 100.0, "K2": 0.01},
    }


DEFAULT_SOURCE = {
    "bumps": [
        {"center": [-0.15, -0.1], "radius": 0.5, "amplitude_re": [1.0, 0.0]},
        {"center": [0.15, 0.1], "radius": 0.5, "amplitude_re": [0.0, 1.0]},
    ]
}


def case_I1_scenario(refinement=5, noise=0.001, seed=7, output_dir="out"):
    """Reference experiment, gamma_J = 0 (unique subcase I.1)."""
    return scenario_from_dict({
        "mesh": {"refinement": refinement},
        "medium": tissue_phantom_medium({"eps": 0.25, "sigma": 0.35, "J": 0.0}),
        "source": DEFAULT_SOURCE,
        "internal": {"mode": "direct"},
        "noise": {"level": noise, "seed": seed},
        "case": "auto",
        "output_dir": output_dir,
    })


def case_II4_scenario(refinement=5, noise=0.01, seed=7, output_dir="out"):
    """Reference experiment, gamma_eps != gamma_J (unique subcase II.4)."""
    return scenario_from_dict({
        "mesh": {"refinement": refinement},
        "medium": tissue_phantom_medium({"eps": 0.35, "sigma": 0.35, "J": 0.65}),
        "source": DEFAULT_SOURCE,
        "internal": {"mode": "direct"},
        "noise": {"level": noise, "seed": seed},
        "case": "auto",
        "output_dir": output_dir,
    })


def measured_gate_scenario(refinement=3, output_dir="out"):
    """Compactly supported modulation response; used by the measured-vs-direct
    equivalence gate (K_max = 6 pi, dk = pi/1.2, delta = 1e-3)."""
    return scenario_from_dict({
        "mesh": {"refinement": refinement},
        "medium": {
            "omega": float(np.pi),
            "impedance": 1.0,
            "background": {"eps_r": 1.0, "sigma": 0.0},
            "regions": [
                {"shape": "disk", "center": [0.1, -0.15], "radius": 0.3,
                 "eps_r": 1.0, "sigma": 0.2},
            ],
            "gammas": {"eps": 0.0, "sigma": 0.35, "J": 0.65},
        },
        "source": DEFAULT_SOURCE,
        "internal": {
            "mode": "measured",
            "sweep": {"k_max": float(6 * np.pi), "dk": float(np.pi / 1.2),
                      "delta": 1e-3},
        },
        "noise": {"level": 0.0, "seed": 0},
        "case": "auto",
        "output_dir": output_dir,
    })


def validation_medium():
    """Mild homogeneous medium for the convergence/trace/identity gates."""
    return MediumModel(
        omega=2.0, impedance=1.0, background_eps=1.0, background_sigma=0.5,
        gammas=Gammas(0.25, 0.35, 0.65),
    )


def validation_source():
    return SourceModel([
        SourceBump((-0.15, -0.1), 0.5, (1.0, 0.0)),
        SourceBump((0.15, 0.1), 0.5, (0.0, 1.0)),
    ])
