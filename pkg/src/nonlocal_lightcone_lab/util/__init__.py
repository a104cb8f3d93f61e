from .failure_bundle import create_failure_bundle
from .tables import read_csv, write_csv, write_json

__all__ = ["create_failure_bundle", "read_csv", "write_csv", "write_json"]
