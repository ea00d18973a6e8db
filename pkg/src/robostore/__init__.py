"""robostore: a versioned column-family store with a simulated cluster on top.

Subpackages cover the storage engine, its timestamp index, tablet
location, the 2PC transaction layer, the MapReduce engine, the property
graph planner, chained instruction execution, the cluster simulator and
the command-line harness.
"""

from .storage import Cell, ColumnPath, ColumnStore, TableSchema, parse_path

__all__ = ["Cell", "ColumnPath", "ColumnStore", "TableSchema", "parse_path"]

__version__ = "0.1.0"
