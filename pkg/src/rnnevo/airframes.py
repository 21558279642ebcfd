"""Sensor manifests for the three general-aviation airframes of the flight dataset.

Every available channel is used as an input. Engine prediction targets are the
exhaust gas temperatures each airframe has; the non-engine targets are shared.
"""

from __future__ import annotations

COMMON = [
    "AltAGL", "AltB", "AltGPS", "AltMSL", "FQtyL", "FQtyR", "GndSpd", "IAS", "LatAc",
    "NormAc", "OAT", "Pitch", "Roll", "TAS", "VSpd", "VSpdG", "WndDir", "WndSpd",
]

_E1_SHARED = ["E1 FFlow", "E1 OilP", "E1 OilT", "E1 RPM"]
_EGT1 = [f"E1 EGT{i}" for i in range(1, 5)]
_EGT2 = [f"E2 EGT{i}" for i in range(1, 5)]

INPUTS = {
    "C172": COMMON + ["BaroA", "E1 CHT1", "E1 CHT2", "E1 CHT3", "E1 CHT4"] + _EGT1 + _E1_SHARED,
    "PA28": COMMON + ["E1 EGT1"] + _E1_SHARED,
    "PA44": COMMON + ["BaroA", "E1 CHT1"] + _EGT1 + _E1_SHARED + ["E1 MAP", "E2 CHT1"] + _EGT2
    + ["E2 FFlow", "E2 OilP", "E2 OilT", "E2 RPM", "E2 MAP"],
}

ENGINE_OUTPUTS = {
    "C172": list(_EGT1),
    "PA28": ["E1 EGT1"],
    "PA44": _EGT1 + _EGT2,
}

NON_ENGINE_OUTPUTS = ["AltMSL", "IAS", "LatAc", "NormAc", "Pitch", "Roll"]

AIRFRAMES = tuple(INPUTS)

# Published add/remove counts per transfer task:
# (inputs added, inputs removed, outputs added, outputs removed)
PUBLISHED_SURGERY_COUNTS = {
    ("PA28", "PA44"): (13, 0, 4, 0),
    ("PA28", "C172"): (8, 0, 3, 0),
    ("C172", "PA28"): (0, 8, 0, 3),
    ("C172", "PA44"): (10, 3, 4, 0),
    ("PA44", "PA28"): (0, 13, 0, 7),
    ("PA44", "C172"): (3, 10, 0, 7),
}


def manifest(airframe: str, task: str = "engine") -> tuple[list[str], list[str]]:
    """(inputs, outputs) for an airframe and a task, "engine" or "non_engine"."""
    if airframe not in INPUTS:
        raise KeyError(f"unknown airframe {airframe!r}; choose from {', '.join(AIRFRAMES)}")
    if task == "engine":
        return list(INPUTS[airframe]), list(ENGINE_OUTPUTS[airframe])
    if task == "non_engine":
        return list(INPUTS[airframe]), list(NON_ENGINE_OUTPUTS)
    raise KeyError(f"unknown task {task!r}")


def surgery_counts(source: str, target: str, task: str = "engine") -> tuple[int, int, int, int]:
    """Set-difference counts implied by the manifests, in the published column order."""
    si, so = map(set, manifest(source, task))
    ti, to = map(set, manifest(target, task))
    return len(ti - si), len(si - ti), len(to - so), len(so - to)
