"""Pulse-level compiler: ZX optimization, partitioning, VUG synthesis, regrouping and GRAPE."""
from .ir import Circuit, Gate, parse_qasm
from .pipeline import CompilationReport, PipelineConfig, compile, compile_circuit

__all__ = ["Circuit", "Gate", "parse_qasm", "CompilationReport", "PipelineConfig", "compile", "compile_circuit"]
__version__ = "0.1.0"
