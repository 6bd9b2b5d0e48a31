import io
from typing import Optional

import pytest

from pycasetime.data_model import (
    CSV_COLUMNS,
    AsaClass,
    Dataset,
    Gender,
    Location,
    PatientClass,
    SurgicalCase,
)
from pycasetime.synth import SynthConfig, synth_generate

HEADER = ",".join(CSV_COLUMNS)


def make_case(
    case_id: str = "c1",
    procedure_name: str = "Adenoidectomy",
    surgeon_id: str = "S1",
    gender: Gender = Gender.FEMALE,
    weight: float = 20.0,
    age: float = 6.0,
    asa: AsaClass = AsaClass.II,
    location: Location = Location.OR,
    patient_class: PatientClass = PatientClass.OUTPATIENT,
    expert_prediction: Optional[float] = 30.0,
    actual_duration: float = 34.0,
) -> SurgicalCase:
    return SurgicalCase(
        case_id=case_id,
        gender=gender,
        weight=weight,
        age=age,
        asa=asa,
        surgeon_id=surgeon_id,
        location=location,
        patient_class=patient_class,
        procedure_name=procedure_name,
        expert_prediction=expert_prediction,
        actual_duration=actual_duration,
    )


def csv_bytes(*rows: str, header: str = HEADER) -> io.BytesIO:
    return io.BytesIO(("\n".join((header,) + rows) + "\n").encode("utf-8"))


@pytest.fixture
def case_factory():
    return make_case


@pytest.fixture(scope="session")
def small_synth():
    """4 procedures x 25 cases, enough for 5-fold CV"""
    return synth_generate(SynthConfig(n_procedures=4, cases_per_procedure=25, n_surgeons=8, seed=3))


@pytest.fixture(scope="session")
def small_dataset(small_synth) -> Dataset:
    return small_synth.dataset


@pytest.fixture(scope="session")
def default_synth():
    return synth_generate(SynthConfig())
