"""Schema-driven ingestion and record-level classification of census microdata."""

from .codes import (
    FLOW_TYPES,
    KNOWN_EDUCATION,
    KNOWN_REASONS,
    NOT_A_MIGRANT,
    SECONDARY_PLUS,
    Education,
    MigrantStatus,
    MoveClass,
    Reason,
    Scale,
    SettlementFlow,
    Sex,
    UrbanStatus,
)
from .hierarchy import Region, RegionHierarchy, load_hierarchy, parse_hierarchy
from .ingest import IngestReport, MicrodataFile, ingest, ingest_batches, read_batch
from .records import (
    AGE_15_PLUS,
    ALL_RECORDS,
    PersonRecord,
    RecordBatch,
    RecordFilter,
    classify_migrant_status,
    classify_move,
    classify_settlement_flow,
)
from .schema import FIELDS, Schema, load_schema

__all__ = [
    "AGE_15_PLUS",
    "ALL_RECORDS",
    "Education",
    "FIELDS",
    "FLOW_TYPES",
    "IngestReport",
    "KNOWN_EDUCATION",
    "KNOWN_REASONS",
    "MicrodataFile",
    "MigrantStatus",
    "MoveClass",
    "NOT_A_MIGRANT",
    "PersonRecord",
    "Reason",
    "RecordBatch",
    "RecordFilter",
    "Region",
    "RegionHierarchy",
    "SECONDARY_PLUS",
    "Scale",
    "Schema",
    "SettlementFlow",
    "Sex",
    "UrbanStatus",
    "classify_migrant_status",
    "classify_move",
    "classify_settlement_flow",
    "ingest",
    "ingest_batches",
    "load_hierarchy",
    "load_schema",
    "parse_hierarchy",
    "read_batch",
]
