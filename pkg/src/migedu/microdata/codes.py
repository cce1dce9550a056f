"""Categorical domains used on records.

Members are ``IntEnum`` so that columnar batches can store them as small
integers; the member name doubles as the canonical text label.
"""

from __future__ import annotations

from enum import Enum, IntEnum


class _Labelled(IntEnum):
    @property
    def label(self) -> str:
        return self.name

    @classmethod
    def parse(cls, text: str):
        if text in cls.__members__:
            return cls[text]
        for name, member in cls.__members__.items():
            if name.lower() == str(text).lower():
                return member
        raise ValueError(f"{text!r} is not a valid {cls.__name__}")

    @classmethod
    def labels(cls) -> list[str]:
        return [m.name for m in cls]


class Education(_Labelled):
    LtPrimary = 0
    Primary = 1
    Secondary = 2
    Tertiary = 3
    Unknown = 4


KNOWN_EDUCATION = (Education.LtPrimary, Education.Primary, Education.Secondary, Education.Tertiary)
SECONDARY_PLUS = (Education.Secondary, Education.Tertiary)


class Sex(_Labelled):
    M = 0
    F = 1
    Unknown = 2


class UrbanStatus(_Labelled):
    Urban = 0
    Rural = 1
    Unknown = 2


class Reason(_Labelled):
    Employment = 0
    Education = 1
    Family = 2
    Marriage = 3
    Other = 4
    Unknown = 5


KNOWN_REASONS = (Reason.Employment, Reason.Education, Reason.Family, Reason.Marriage, Reason.Other)


class MoveClass(_Labelled):
    Stayer = 0
    IntraMajorMove = 1
    InterMajorMove = 2
    Unclassifiable = 3


class MigrantStatus(_Labelled):
    UrbanInMigrant = 0
    RuralInMigrant = 1
    UrbanStayer = 2
    RuralStayer = 3
    Unclassifiable = 4


class SettlementFlow(_Labelled):
    """Origin x destination settlement type; the first letter is the origin."""

    RR = 0
    RU = 1
    UR = 2
    UU = 3
    Unknown = 4


# Batch-level code for records that are not migrants at the scale in use.
NOT_A_MIGRANT = 5

FLOW_TYPES = (SettlementFlow.RR, SettlementFlow.RU, SettlementFlow.UR, SettlementFlow.UU)


class Scale(str, Enum):
    minor = "minor"
    major = "major"

    @classmethod
    def coerce(cls, value: "Scale | str") -> "Scale":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"scale must be 'minor' or 'major', got {value!r}") from None


# Categorical fields and the enum each one decodes into.
CATEGORICAL_FIELDS = {
    "education_level": Education,
    "sex": Sex,
    "urban_now": UrbanStatus,
    "urban_prev": UrbanStatus,
    "reason": Reason,
}

# Code-map keys in the schema document; both urban columns share one map.
CODE_MAP_FOR_FIELD = {
    "education_level": "education",
    "sex": "sex",
    "urban_now": "urban",
    "urban_prev": "urban",
    "reason": "reason",
}

CODE_MAP_DOMAINS = {
    "education": Education,
    "sex": Sex,
    "urban": UrbanStatus,
    "reason": Reason,
}
