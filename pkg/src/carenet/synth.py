"""Synthetic patient cohorts and EHR access logs with planted signals.

The generator produces, for each patient, a care team drawn from a shared
HCP pool, a set of notes written and read by team members, and a survival
label drawn from a logistic model:

    logit(p_survive) = logit(base_rate) + gp_effect * [GP in patient's log]
                       - comorbidity_effect * (active comorbidity count)
                       + noise

so that general-practice involvement and comorbidity burden are the only
label-relevant signals. Demographic confounders are drawn independently of
the label. Comorbidities cluster: a cardiometabolic cluster (anchored at
disease 0) both raises the comorbidity count and pulls a cardiologist into
the care team, which makes part of the comorbidity burden visible in the
collaboration graph. All patients are alive through the full log horizon;
``survived`` describes the outcome determined after it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import taxonomy

CANCER_TYPES = ("breast", "lung", "colorectal")
GENDERS = ("female", "male")
INSURANCE_KINDS = ("private", "public")
N_COMORBIDITIES = 39

T_MIN = -90.0
T_MAX = 365.0

SCHEMA_VERSION = 1

# Generator process constants (not part of SynthConfig; changing them is a
# dataset-version change).
TEAM_BASE_SIZE = 4
TEAM_EXTRA_MEAN = 3.0
GP_POOL_SHARE = 0.25
CARDIO_POOL_SHARE = 0.015
EM_POOL_SHARE = 0.03
EM_CONSULT_RATE = 0.08
NOTE_WRITE_SPAN = (-90.0, 240.0)
READ_LAG_SCALE = 15.0
SURVIVAL_NOISE_SD = 0.05
COMORBIDITY_CLUSTER_RATE = 0.25
COMORBIDITY_SCATTER_RATE = 0.005
CARDIAC_ANCHOR = 0  # cluster anchor disease; triggers a cardiology consult
CARDIAC_CLUSTER_POOL = tuple(range(1, 8))
CLUSTER_SIZES = {"breast": (5, 6), "lung": (2, 3), "colorectal": (5, 6)}

TITLE_POOL_WEIGHTS = (0.34, 0.12, 0.08, 0.28, 0.04, 0.08, 0.06)
TITLE_WRITE_WEIGHTS = {
    "MD": 5.0,
    "NP": 3.0,
    "PA": 3.0,
    "RN": 2.0,
    "Pharmacy Technician": 0.5,
    "Pharmacist": 1.0,
    "Case Manager": 1.0,
}

DEFAULT_CLASS_SKEW = {"breast": 0.85, "lung": 0.65, "colorectal": 0.85}


class ConfigError(ValueError):
    """A SynthConfig field violates its invariant; names the field."""


class DatasetFormatError(ValueError):
    """Dataset file is malformed or violates a record invariant."""


class SchemaVersionError(DatasetFormatError):
    """Dataset was written with an incompatible schema version."""


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    patients_per_cancer: int = 200
    survival_base_rate: float = 0.85
    gp_effect: float = 2.0
    comorbidity_effect: float = 0.5
    hcp_pool_size: int = 150
    mean_notes_per_patient: float = 6.0
    mean_reads_per_note: float = 2.0
    class_skew: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_CLASS_SKEW)
    )

    def validate(self) -> None:
        if not 0.0 < self.survival_base_rate < 1.0:
            raise ConfigError(
                f"survival_base_rate must be in (0, 1), got {self.survival_base_rate}"
            )
        if self.patients_per_cancer <= 0:
            raise ConfigError(
                f"patients_per_cancer must be > 0, got {self.patients_per_cancer}"
            )
        if self.hcp_pool_size <= 0:
            raise ConfigError(f"hcp_pool_size must be > 0, got {self.hcp_pool_size}")
        if self.gp_effect < 0.0:
            raise ConfigError(f"gp_effect must be >= 0, got {self.gp_effect}")
        if self.mean_notes_per_patient <= 0.0:
            raise ConfigError(
                f"mean_notes_per_patient must be > 0, got {self.mean_notes_per_patient}"
            )
        if self.mean_reads_per_note <= 0.0:
            raise ConfigError(
                f"mean_reads_per_note must be > 0, got {self.mean_reads_per_note}"
            )
        for cancer, rate in self.class_skew.items():
            if cancer not in CANCER_TYPES:
                raise ConfigError(f"class_skew has unknown cancer type {cancer!r}")
            if not 0.0 < rate < 1.0:
                raise ConfigError(
                    f"class_skew[{cancer!r}] must be in (0, 1), got {rate}"
                )

    def base_rate(self, cancer_type: str) -> float:
        return self.class_skew.get(cancer_type, self.survival_base_rate)


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    cancer_type: str
    cancer_stage: int
    gender: str
    age: int
    insurance: str
    comorbidities: tuple[int, ...]
    survived: bool


@dataclass(frozen=True)
class HcpProfile:
    hcp_id: str
    title: str
    hcp_type: str
    specialty: str
    is_resident: bool


@dataclass(frozen=True)
class NoteProfile:
    note_id: str
    intent: str
    content: str
    is_inpatient: bool


@dataclass(frozen=True)
class AccessLogEvent:
    patient_id: str
    hcp_id: str
    note_id: str
    action: str  # "read" | "write"
    t: float


class Cohort(NamedTuple):
    patients: list[PatientRecord]
    hcps: list[HcpProfile]
    notes: list[NoteProfile]
    events: list[AccessLogEvent]


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _categorical_weights(n: int) -> np.ndarray:
    # Mildly skewed usage frequencies; early categories are more common.
    w = 1.0 / (1.0 + np.arange(n, dtype=np.float64))
    return w / w.sum()


def _make_hcp_pool(rng: np.random.Generator, size: int) -> list[HcpProfile]:
    n_gp = max(1, round(GP_POOL_SHARE * size))
    n_cardio = max(1, round(CARDIO_POOL_SHARE * size)) if size > 2 else 1
    n_em = max(1, round(EM_POOL_SHARE * size)) if size > 3 else 0
    n_gp = min(n_gp, size - 1) if size > 1 else size
    specialties = ["General Practice"] * n_gp + ["Cardiology"] * n_cardio
    specialties += ["Emergency Medicine"] * n_em
    other = [
        s
        for s in taxonomy.SPECIALTIES
        if s not in ("General Practice", "Cardiology", "Emergency Medicine")
    ]
    while len(specialties) < size:
        specialties.append(other[int(rng.integers(len(other)))])
    specialties = specialties[:size]

    pool = []
    title_idx = rng.choice(len(taxonomy.TITLES), size=size, p=TITLE_POOL_WEIGHTS)
    type_w = _categorical_weights(len(taxonomy.HCP_TYPES))
    type_idx = rng.choice(len(taxonomy.HCP_TYPES), size=size, p=type_w)
    resident_draw = rng.random(size)
    for i in range(size):
        title = taxonomy.TITLES[int(title_idx[i])]
        pool.append(
            HcpProfile(
                hcp_id=f"h{i:04d}",
                title=title,
                hcp_type=taxonomy.HCP_TYPES[int(type_idx[i])],
                specialty=specialties[i],
                is_resident=bool(title == "MD" and resident_draw[i] < 0.3),
            )
        )
    return pool


def _draw_comorbidities(
    rng: np.random.Generator, cancer_type: str
) -> tuple[np.ndarray, bool]:
    """Returns (39-dim 0/1 vector, cluster_present)."""
    vec = (rng.random(N_COMORBIDITIES) < COMORBIDITY_SCATTER_RATE).astype(np.int64)
    cluster = bool(rng.random() < COMORBIDITY_CLUSTER_RATE)
    if cluster:
        sizes = CLUSTER_SIZES[cancer_type]
        k = int(sizes[int(rng.integers(len(sizes)))])
        vec[CARDIAC_ANCHOR] = 1
        extra = rng.choice(
            len(CARDIAC_CLUSTER_POOL), size=min(k - 1, len(CARDIAC_CLUSTER_POOL)), replace=False
        )
        for j in extra:
            vec[CARDIAC_CLUSTER_POOL[int(j)]] = 1
    return vec, cluster


def generate_cohort(config: SynthConfig) -> Cohort:
    """Generate a reproducible cohort; identical configs give identical output."""
    config.validate()
    rng = np.random.default_rng(config.seed)

    pool = _make_hcp_pool(rng, config.hcp_pool_size)
    base_team_idx = np.array(
        [i for i, h in enumerate(pool) if h.specialty != "Cardiology"], dtype=np.intp
    )
    cardio_idx = np.array(
        [i for i, h in enumerate(pool) if h.specialty == "Cardiology"], dtype=np.intp
    )
    em_idx = np.array(
        [i for i, h in enumerate(pool) if h.specialty == "Emergency Medicine"],
        dtype=np.intp,
    )
    gp_ids = {h.hcp_id for h in pool if h.specialty == "General Practice"}
    write_w = np.array([TITLE_WRITE_WEIGHTS[h.title] for h in pool], dtype=np.float64)

    intent_w = _categorical_weights(len(taxonomy.NOTE_INTENTS))
    content_w = _categorical_weights(len(taxonomy.NOTE_CONTENTS))

    patients: list[PatientRecord] = []
    notes: list[NoteProfile] = []
    events: list[AccessLogEvent] = []

    pid = 0
    for cancer_type in CANCER_TYPES:
        base = config.base_rate(cancer_type)
        for _ in range(config.patients_per_cancer):
            patient_id = f"p{pid:05d}"
            pid += 1

            comorb, cluster = _draw_comorbidities(rng, cancer_type)

            # Care team: a base sample of the pool, plus consultants pulled
            # in by the patient's condition.
            extra = int(rng.poisson(TEAM_EXTRA_MEAN))
            size = min(TEAM_BASE_SIZE + extra, base_team_idx.size)
            team = list(rng.choice(base_team_idx, size=size, replace=False))
            if cluster and cardio_idx.size:
                team.append(int(cardio_idx[int(rng.integers(cardio_idx.size))]))
            if em_idx.size and rng.random() < EM_CONSULT_RATE:
                cand = int(em_idx[int(rng.integers(em_idx.size))])
                if cand not in team:
                    team.append(cand)
            team = [int(i) for i in team]

            # Notes and access events.
            n_notes = max(1, int(rng.poisson(config.mean_notes_per_patient)))
            team_write_w = write_w[team]
            team_write_w = team_write_w / team_write_w.sum()
            lo, hi = NOTE_WRITE_SPAN
            seen: set[int] = set()
            patient_events: list[AccessLogEvent] = []
            note_ids: list[str] = []
            write_t: list[float] = []
            for j in range(n_notes):
                note_id = f"{patient_id}-n{j:03d}"
                notes.append(
                    NoteProfile(
                        note_id=note_id,
                        intent=taxonomy.NOTE_INTENTS[
                            int(rng.choice(len(taxonomy.NOTE_INTENTS), p=intent_w))
                        ],
                        content=taxonomy.NOTE_CONTENTS[
                            int(rng.choice(len(taxonomy.NOTE_CONTENTS), p=content_w))
                        ],
                        is_inpatient=bool(rng.random() < 0.3),
                    )
                )
                t_w = float(rng.uniform(lo, hi))
                writer = int(team[int(rng.choice(len(team), p=team_write_w))])
                seen.add(writer)
                note_ids.append(note_id)
                write_t.append(t_w)
                patient_events.append(
                    AccessLogEvent(patient_id, pool[writer].hcp_id, note_id, "write", t_w)
                )
                for _ in range(int(rng.poisson(config.mean_reads_per_note))):
                    reader = int(team[int(rng.integers(len(team)))])
                    seen.add(reader)
                    t_r = min(t_w + float(rng.exponential(READ_LAG_SCALE)), T_MAX)
                    patient_events.append(
                        AccessLogEvent(patient_id, pool[reader].hcp_id, note_id, "read", t_r)
                    )
            # Every team member touches the chart at least once.
            for member in team:
                if member not in seen:
                    j = int(rng.integers(n_notes))
                    t_r = min(write_t[j] + float(rng.exponential(READ_LAG_SCALE)), T_MAX)
                    patient_events.append(
                        AccessLogEvent(
                            patient_id, pool[member].hcp_id, note_ids[j], "read", t_r
                        )
                    )
            events.extend(patient_events)

            gp_present = any(e.hcp_id in gp_ids for e in patient_events)
            z = (
                logit(base)
                + config.gp_effect * float(gp_present)
                - config.comorbidity_effect * float(comorb.sum())
                + float(rng.normal(0.0, SURVIVAL_NOISE_SD))
            )
            survived = bool(rng.random() < sigmoid(z))

            patients.append(
                PatientRecord(
                    patient_id=patient_id,
                    cancer_type=cancer_type,
                    cancer_stage=int(2 + rng.integers(2)),
                    gender=GENDERS[int(rng.integers(2))],
                    age=int(np.clip(round(rng.normal(62.0, 10.0)), 30, 90)),
                    insurance=INSURANCE_KINDS[int(rng.random() >= 0.6)],
                    comorbidities=tuple(int(v) for v in comorb),
                    survived=survived,
                )
            )

    return Cohort(patients, pool, notes, events)


# ---------------------------------------------------------------------------
# Dataset files: one JSON-lines file per entity kind plus a manifest.

_ENTITY_FILES = {
    "patients": "patients.jsonl",
    "hcps": "hcps.jsonl",
    "notes": "notes.jsonl",
    "events": "events.jsonl",
}


def _record_dict(rec) -> dict:
    d = {}
    for f in fields(rec):
        v = getattr(rec, f.name)
        if isinstance(v, tuple):
            v = list(v)
        d[f.name] = v
    return d


def write_dataset(cohort: Cohort, path: str | Path, config: SynthConfig | None = None) -> None:
    """Write the cohort under ``path`` (a directory, created if needed)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for kind, filename in _ENTITY_FILES.items():
        records = getattr(cohort, kind)
        with open(path / filename, "w", encoding="utf-8") as f:
            f.write(json.dumps({"schema_version": SCHEMA_VERSION, "entity": kind}) + "\n")
            for rec in records:
                f.write(json.dumps(_record_dict(rec)) + "\n")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "counts": {kind: len(getattr(cohort, kind)) for kind in _ENTITY_FILES},
        "config": None if config is None else _config_dict(config),
    }
    with open(path / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")


def _config_dict(config: SynthConfig) -> dict:
    d = {}
    for f in fields(config):
        v = getattr(config, f.name)
        d[f.name] = dict(v) if isinstance(v, dict) else v
    return d


def config_from_dict(d: dict) -> SynthConfig:
    known = {f.name for f in fields(SynthConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown SynthConfig fields: {sorted(unknown)}")
    return SynthConfig(**d)


def _parse_line(path: Path, lineno: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{path}:{lineno}: malformed record: {e}") from e
    if not isinstance(obj, dict):
        raise DatasetFormatError(f"{path}:{lineno}: expected an object")
    return obj


def _load_entity(path: Path, kind: str, builder) -> list:
    records = []
    with open(path, encoding="utf-8") as f:
        header_line = f.readline()
        if not header_line:
            raise DatasetFormatError(f"{path}:1: missing schema header")
        header = _parse_line(path, 1, header_line)
        version = header.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"{path}:1: schema_version {version!r} unsupported "
                f"(expected {SCHEMA_VERSION})"
            )
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            obj = _parse_line(path, lineno, line)
            try:
                records.append(builder(obj))
            except (KeyError, TypeError, ValueError) as e:
                raise DatasetFormatError(f"{path}:{lineno}: bad {kind} record: {e}") from e
    return records


def _build_patient(obj: dict) -> PatientRecord:
    comorb = obj["comorbidities"]
    if len(comorb) != N_COMORBIDITIES or any(v not in (0, 1) for v in comorb):
        raise ValueError(
            f"PatientRecord.comorbidities must be {N_COMORBIDITIES} binary entries"
        )
    if obj["cancer_type"] not in CANCER_TYPES:
        raise ValueError(f"PatientRecord.cancer_type {obj['cancer_type']!r} unknown")
    if obj["cancer_stage"] not in (2, 3):
        raise ValueError(f"PatientRecord.cancer_stage must be 2 or 3")
    return PatientRecord(
        patient_id=obj["patient_id"],
        cancer_type=obj["cancer_type"],
        cancer_stage=int(obj["cancer_stage"]),
        gender=obj["gender"],
        age=int(obj["age"]),
        insurance=obj["insurance"],
        comorbidities=tuple(int(v) for v in comorb),
        survived=bool(obj["survived"]),
    )


def _build_hcp(obj: dict) -> HcpProfile:
    if obj["title"] not in taxonomy.TITLES:
        raise ValueError(f"HcpProfile.title {obj['title']!r} not in taxonomy")
    if obj["hcp_type"] not in taxonomy.HCP_TYPES:
        raise ValueError(f"HcpProfile.hcp_type {obj['hcp_type']!r} not in taxonomy")
    if obj["specialty"] not in taxonomy.SPECIALTIES:
        raise ValueError(f"HcpProfile.specialty {obj['specialty']!r} not in taxonomy")
    return HcpProfile(
        hcp_id=obj["hcp_id"],
        title=obj["title"],
        hcp_type=obj["hcp_type"],
        specialty=obj["specialty"],
        is_resident=bool(obj["is_resident"]),
    )


def _build_note(obj: dict) -> NoteProfile:
    if obj["intent"] not in taxonomy.NOTE_INTENTS:
        raise ValueError(f"NoteProfile.intent {obj['intent']!r} not in taxonomy")
    if obj["content"] not in taxonomy.NOTE_CONTENTS:
        raise ValueError(f"NoteProfile.content {obj['content']!r} not in taxonomy")
    return NoteProfile(
        note_id=obj["note_id"],
        intent=obj["intent"],
        content=obj["content"],
        is_inpatient=bool(obj["is_inpatient"]),
    )


def _build_event(obj: dict) -> AccessLogEvent:
    action = obj["action"]
    if action not in ("read", "write"):
        raise ValueError(f"AccessLogEvent.action {action!r} must be read or write")
    t = float(obj["t"])
    if not T_MIN <= t <= T_MAX:
        raise ValueError(
            f"AccessLogEvent.t = {t} outside [{T_MIN:g}, {T_MAX:g}]"
        )
    return AccessLogEvent(
        patient_id=obj["patient_id"],
        hcp_id=obj["hcp_id"],
        note_id=obj["note_id"],
        action=action,
        t=t,
    )


def validate_events(events: list[AccessLogEvent]) -> None:
    """Check the write-before-read invariant across the event list."""
    write_t: dict[str, float] = {}
    for e in events:
        if e.action == "write":
            if e.note_id in write_t:
                write_t[e.note_id] = min(write_t[e.note_id], e.t)
            else:
                write_t[e.note_id] = e.t
    for e in events:
        if e.action == "read":
            if e.note_id not in write_t:
                raise DatasetFormatError(
                    f"read of note {e.note_id} which has no write event"
                )
            if e.t < write_t[e.note_id]:
                raise DatasetFormatError(
                    f"read of note {e.note_id} at t={e.t} precedes its write "
                    f"at t={write_t[e.note_id]}"
                )


def read_dataset(path: str | Path) -> Cohort:
    """Read a dataset directory; raises DatasetFormatError on any violation."""
    path = Path(path)
    patients = _load_entity(path / _ENTITY_FILES["patients"], "patient", _build_patient)
    hcps = _load_entity(path / _ENTITY_FILES["hcps"], "hcp", _build_hcp)
    notes = _load_entity(path / _ENTITY_FILES["notes"], "note", _build_note)
    events = _load_entity(path / _ENTITY_FILES["events"], "event", _build_event)
    validate_events(events)
    known_hcps = {h.hcp_id for h in hcps}
    known_notes = {n.note_id for n in notes}
    for e in events:
        if e.hcp_id not in known_hcps:
            raise DatasetFormatError(f"event references unknown hcp_id {e.hcp_id!r}")
        if e.note_id not in known_notes:
            raise DatasetFormatError(f"event references unknown note_id {e.note_id!r}")
    return Cohort(patients, hcps, notes, events)
