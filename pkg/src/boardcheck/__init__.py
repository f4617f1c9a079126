"""Toolkit for extracting, validating, and integrating electronic-board test data.

Measured values and acceptance limits arrive as heterogeneous text inside test
reports.  This package parses them, checks compliance deterministically and via
a pluggable LLM backend, stores report metadata in a small RDF-style knowledge
graph, exposes row-level results through OBDA-style mappings, and benchmarks
checker quality and pipeline cost savings.
"""

__version__ = "0.1.0"
