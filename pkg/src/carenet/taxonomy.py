"""Fixed categorical vocabularies for notes and healthcare professionals.

The taxonomies are synthetic but their cardinalities (7 titles, 12 types,
71 specialties, 5 intents, 32 contents) are part of the data contract and
must not change between dataset versions. A handful of semantically
meaningful categories sit at pinned indices so that experiments can plant
and recover signals tied to them.
"""

from __future__ import annotations

TAXONOMY_VERSION = 1

TITLES = (
    "MD",
    "NP",
    "PA",
    "RN",
    "Pharmacy Technician",
    "Pharmacist",
    "Case Manager",
)

HCP_TYPES = (
    "Physician Faculty",
    "Physician Fellow",
    "Physician Community",
    "Nurse Inpatient",
    "Nurse Clinic",
    "Nurse Triage",
    "Advanced Practice Provider",
    "Pharmacy Inpatient",
    "Pharmacy Outpatient",
    "Care Coordination",
    "Behavioral Health",
    "Other Clinical Staff",
)

# Pinned indices: General Practice, Cardiology and Emergency Medicine are
# referenced by the cohort generator and by the attribution experiments.
GENERAL_PRACTICE = 0
CARDIOLOGY = 1
EMERGENCY_MEDICINE = 2

SPECIALTIES = (
    "General Practice",
    "Cardiology",
    "Emergency Medicine",
    "Dermatology",
    "Medical Oncology",
    "Radiation Oncology",
    "Surgical Oncology",
    "Hematology",
    "Pulmonology",
    "Gastroenterology",
    "Endocrinology",
    "Nephrology",
    "Neurology",
    "Neurosurgery",
    "Orthopedics",
    "Urology",
    "Gynecology",
    "Obstetrics",
    "Ophthalmology",
    "Otolaryngology",
    "Psychiatry",
    "Psychology",
    "Rheumatology",
    "Infectious Disease",
    "Allergy and Immunology",
    "Anesthesiology",
    "Pain Management",
    "Palliative Care",
    "Hospice",
    "Physical Medicine",
    "Physical Therapy",
    "Occupational Therapy",
    "Speech Therapy",
    "Nutrition",
    "Social Work",
    "Case Management",
    "Pharmacy Clinical",
    "Pharmacy Retail",
    "Radiology",
    "Interventional Radiology",
    "Nuclear Medicine",
    "Pathology",
    "Laboratory Medicine",
    "Genetics",
    "Internal Medicine",
    "Hospital Medicine",
    "Critical Care",
    "Family Medicine Sports",
    "Geriatrics",
    "Pediatrics",
    "Adolescent Medicine",
    "Dental Medicine",
    "Oral Surgery",
    "Plastic Surgery",
    "Vascular Surgery",
    "Thoracic Surgery",
    "Colorectal Surgery",
    "Breast Surgery",
    "Transplant Surgery",
    "Trauma Surgery",
    "Bariatric Surgery",
    "Hepatology",
    "Sleep Medicine",
    "Sports Medicine",
    "Wound Care",
    "Dialysis",
    "Respiratory Therapy",
    "Audiology",
    "Optometry",
    "Podiatry",
    "Integrative Medicine",
)

NOTE_INTENTS = (
    "Orders",
    "Patient Clinical Information",
    "Care Coordination",
    "Medication Management",
    "Administrative",
)

NOTE_CONTENTS = (
    "Order Canceled",
    "Note Signed",
    "Progress Note",
    "Consult Request",
    "Consult Response",
    "Discharge Summary",
    "Admission Note",
    "Operative Report",
    "Procedure Note",
    "Pathology Review",
    "Imaging Review",
    "Lab Review",
    "Medication Order",
    "Medication Reconciliation",
    "Infusion Record",
    "Chemotherapy Plan",
    "Radiation Plan",
    "Treatment Summary",
    "Symptom Assessment",
    "Pain Assessment",
    "Nursing Assessment",
    "Triage Note",
    "Telephone Encounter",
    "Patient Message Review",
    "Care Plan Update",
    "Referral Letter",
    "Prior Authorization",
    "Insurance Documentation",
    "Social Work Note",
    "Nutrition Note",
    "Therapy Note",
    "Addendum",
)

N_TITLES = len(TITLES)
N_HCP_TYPES = len(HCP_TYPES)
N_SPECIALTIES = len(SPECIALTIES)
N_INTENTS = len(NOTE_INTENTS)
N_CONTENTS = len(NOTE_CONTENTS)

# Node feature layout. Blocks are concatenated in this order; blocks that do
# not apply to a node's kind stay all-zero.
KIND_OFFSET = 0  # [note, hcp]
INTENT_OFFSET = 2
CONTENT_OFFSET = INTENT_OFFSET + N_INTENTS
INPATIENT_OFFSET = CONTENT_OFFSET + N_CONTENTS
TITLE_OFFSET = INPATIENT_OFFSET + 1
TYPE_OFFSET = TITLE_OFFSET + N_TITLES
SPECIALTY_OFFSET = TYPE_OFFSET + N_HCP_TYPES
RESIDENT_OFFSET = SPECIALTY_OFFSET + N_SPECIALTIES
FEATURE_DIM = RESIDENT_OFFSET + 1

GP_FEATURE = SPECIALTY_OFFSET + GENERAL_PRACTICE
CARDIOLOGY_FEATURE = SPECIALTY_OFFSET + CARDIOLOGY

assert FEATURE_DIM == 131
assert N_SPECIALTIES == 71 and N_CONTENTS == 32


def feature_names() -> list[str]:
    """Human-readable name for each of the 131 feature positions."""
    names = ["kind=note", "kind=hcp"]
    names += [f"intent={c}" for c in NOTE_INTENTS]
    names += [f"content={c}" for c in NOTE_CONTENTS]
    names.append("note=inpatient")
    names += [f"title={c}" for c in TITLES]
    names += [f"type={c}" for c in HCP_TYPES]
    names += [f"specialty={c}" for c in SPECIALTIES]
    names.append("hcp=resident")
    assert len(names) == FEATURE_DIM
    return names
