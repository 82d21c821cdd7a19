"""Deterministic V2V cooperative-perception simulator with two-round selective communication."""

__version__ = "0.1.0"
