"""Shared fixtures: the reference device and expensive session-wide results."""

import math

import pytest

from qswitch.model import (
    TWO_PI,
    CouplingParams,
    DeviceModel,
    DriveParams,
    QubitParams,
    ResonatorParams,
)

# Reference device parameters used throughout the suite (angular, rad/s).
G = TWO_PI * 9.14e6
DELTA = TWO_PI * 2.417e9
WR = TWO_PI * 2.417e9
WZ = TWO_PI * 150e6
T1_QUBIT = 0.45e-6
T1_RESONATOR = 4.6e-6


def build_model(*, lambda_z=0.0, phase=0.0, with_drive=True, wz=WZ,
                t1_qubit=math.inf, t1_resonator=math.inf, epsilon=0.0,
                gap=DELTA, wr=WR, g=G, fock_cutoff=5):
    drive = DriveParams(amplitude=lambda_z, frequency=wz, phase=phase) if with_drive else None
    return DeviceModel(
        qubit=QubitParams(gap=gap, bias=epsilon),
        resonator=ResonatorParams(frequency=wr, t1=t1_resonator),
        coupling=CouplingParams(g=g),
        drive=drive,
        qubit_t1=t1_qubit,
        fock_cutoff=fock_cutoff)


@pytest.fixture(scope="session")
def make_model():
    """Factory for the reference device with keyword overrides."""
    return build_model


@pytest.fixture(scope="session")
def switch_off_lambda(make_model):
    """The gap-minimizing drive amplitude for the reference device (rad/s)."""
    from qswitch.protocols import find_switch_off
    return find_switch_off(make_model())
