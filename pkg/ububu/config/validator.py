from ububu.config.schema import Schema
from ububu.errors import ConfigError
from ububu.utils import ERRORS, JSON


class Validator:
    """Draft-04 subset validator; schema errors surface when it is built, data errors from `run`."""

    def __init__(self, schema_definition: dict):
        dialect = schema_definition.get("$schema", "http://json-schema.org/draft-04/schema#")
        if dialect not in ("http://json-schema.org/schema#", "http://json-schema.org/draft-04/schema#"):
            raise ConfigError(["$schema"], f"Invalid dialect (a version of JSON Schema): {dialect}")
        self.schema_definition = schema_definition
        self.schema = Schema()
        self.program = self.schema.program(schema_definition, [])

    def run(self, data: JSON) -> ERRORS:
        errors = []
        self.program.check(data, [], errors)
        return errors

    def validate(self, data: JSON) -> JSON:
        errors = self.run(data)
        if errors:
            error = errors[0]
            raise ConfigError(error["path"], f"Failed `{error['keyword']}` check (expected {error['value']!r})")
        return data
