from pydantic import BaseModel, Field
from typing import Optional, List, Dict, Any


class ParamsRecord(BaseModel):
    m: int
    r: int


class OutputRecord(BaseModel):
    command: str
    params: ParamsRecord
    inputs: Dict[str, Any] = Field(default_factory=dict)
    results: Dict[str, Any] = Field(default_factory=dict)
    status: str


class CheckTally(BaseModel):
    passed: int = 0
    failed: int = 0
    skipped: int = 0


class ScanItem(BaseModel):
    input: str
    verdict: str
    evidence: Dict[str, Any] = Field(default_factory=dict)


class ScanCounts(BaseModel):
    confirmed: int = 0
    refuted: int = 0
    unknown: int = 0

    @property
    def total(self) -> int:
        return self.confirmed + self.refuted + self.unknown


class ScanReport(BaseModel):
    kind: str
    params: ParamsRecord
    sample: str
    counts: ScanCounts
    items: List[ScanItem] = Field(default_factory=list)
    witnesses: List[ScanItem] = Field(default_factory=list)
    checks: Dict[str, CheckTally] = Field(default_factory=dict)
    statuses: Dict[str, int] = Field(default_factory=dict)
    summary: Dict[str, Any] = Field(default_factory=dict)


class PermutationTable(BaseModel):
    params: ParamsRecord
    k: int
    mapping: List[int]
    order: int
    bijective: bool
    order_divides_modulus: bool


class Table1Row(BaseModel):
    x: int
    omega: str
    omega_exact: Optional[str] = None
    omega_hat: str
    omega_hat_status: str
    omega_hat_value: Optional[str] = None
    omega_hat_error_bound: Optional[str] = None
