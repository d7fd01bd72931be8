"""Cloud-to-cloud data migration engine with an ORM-versus-column-wise benchmark harness."""

__version__ = "0.1.0"
