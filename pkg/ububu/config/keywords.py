import math

from ububu.config.keyword import Keyword
from ububu.errors import ConfigError
from ububu.utils import ERRORS, JSON, PATH


def json_type(data: JSON) -> str:
    if data is None:
        return "null"
    if isinstance(data, bool):
        return "boolean"
    if isinstance(data, int):
        return "integer"
    if isinstance(data, float):
        return "number"
    if isinstance(data, str):
        return "string"
    if isinstance(data, list):
        return "array"
    if isinstance(data, dict):
        return "object"
    raise ConfigError([], f"Unsupported value of type {type(data).__name__}")


def is_equal(a: JSON, b: JSON) -> bool:
    type_a, type_b = json_type(a), json_type(b)
    numeric = {"integer", "number"}
    if type_a in numeric and type_b in numeric:
        return a == b
    if type_a != type_b:
        return False
    if type_a == "array":
        return len(a) == len(b) and all(is_equal(x, y) for x, y in zip(a, b))
    if type_a == "object":
        return a.keys() == b.keys() and all(is_equal(a[k], b[k]) for k in a)
    return a == b


def non_unique_items(data: list) -> bool:
    return any(is_equal(data[i], data[j]) for i in range(len(data)) for j in range(i + 1, len(data)))


# General
class Type(Keyword):
    name = "type"
    valid_types = ("array", "boolean", "integer", "null", "number", "object", "string")

    def validate(self):
        valid_types = set(self.valid_types)

        if type(self.value) == str:
            if self.value not in valid_types:
                raise ConfigError(self.path, f"Invalid type. Possible types: {', '.join(sorted(valid_types))}")
        elif type(self.value) == list:
            if len(self.value) == 0:
                raise ConfigError(self.path, "It must be an non-empty array of strings")
            elif len(list(filter(lambda x: type(x) != str or len(x) == 0, self.value))) > 0:
                raise ConfigError(self.path, "It must be an array, where each element is a non-empty string")
            elif len(self.value) != len(set(self.value)):
                raise ConfigError(self.path, "It must be an array of strings, where each element is unique")
            elif (set(self.value) & valid_types) != set(self.value):
                raise ConfigError(self.path, f"Invalid types. Possible types: {', '.join(sorted(valid_types))}")
        else:
            raise ConfigError(self.path, "The value of this keyword must be either a string or an array of strings")

    @property
    def types(self) -> set:
        return {self.value} if type(self.value) == str else set(self.value)

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        actual = json_type(data)
        # An integer is also a number.
        if actual not in self.types and not (actual == "integer" and "number" in self.types):
            errors.append(self.errors(path))
        elif actual == "number" and not math.isfinite(data):
            errors.append(self.errors(path))


class Enum(Keyword):
    name = "enum"

    def validate(self):
        if type(self.value) != list:
            raise ConfigError(self.path, "It must be an array")
        elif len(self.value) == 0:
            raise ConfigError(self.path, "It must be an array with at least one element")
        elif non_unique_items(self.value):
            raise ConfigError(self.path, "It must be an array, where each element is unique")

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        if not any(is_equal(data, item) for item in self.value):
            errors.append(self.errors(path))


# Array
class Items(Keyword):
    name = "items"
    type = "array"

    def validate(self):
        if not self.schema.is_schema(self.value):
            raise ConfigError(self.path, "It must be a JSON Schema object")
        self.schema.program(self.value, self.path)

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        program = self.schema.program(self.value, self.path)
        for i, item in enumerate(data):
            program.check(item, path + [i], errors)


class MinItems(Keyword):
    name = "minItems"
    type = "array"

    def validate(self):
        if type(self.value) != int:
            raise ConfigError(self.path, "It must be an integer")
        elif self.value < 0:
            raise ConfigError(self.path, "It must be a non-negative integer")

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        if len(data) < self.value:
            errors.append(self.errors(path))


# Number and Integer
class MultipleOf(Keyword):
    name = "multipleOf"
    type = "integer", "number"

    def validate(self):
        if type(self.value) not in {int, float}:
            raise ConfigError(self.path, "It must be an integer or a number")
        elif not self.value > 0:
            raise ConfigError(self.path, "It must be strictly greater than 0")

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        quotient = data / self.value
        if not math.isclose(quotient, round(quotient), rel_tol=1e-12, abs_tol=1e-12):
            errors.append(self.errors(path))


class Minimum(Keyword):
    name = "minimum"
    type = "integer", "number"

    def validate(self):
        if type(self.value) not in {int, float}:
            raise ConfigError(self.path, "It must be an integer or a number")

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        if "exclusiveMinimum" in self.rules and self.rules["exclusiveMinimum"].value is True:
            failed = data <= self.value
        else:
            failed = data < self.value
        if failed:
            errors.append(self.errors(path))


class Maximum(Keyword):
    name = "maximum"
    type = "integer", "number"

    def validate(self):
        if type(self.value) not in {int, float}:
            raise ConfigError(self.path, "It must be an integer or a number")
        elif "minimum" in self.rules:
            self.rules["minimum"].validate()
            if self.value < self.rules["minimum"].value:
                raise ConfigError(self.path, "It must be greater or equal to `minimum`")

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        if "exclusiveMaximum" in self.rules and self.rules["exclusiveMaximum"].value is True:
            failed = data >= self.value
        else:
            failed = data > self.value
        if failed:
            errors.append(self.errors(path))


class ExclusiveMinimum(Keyword):
    name = "exclusiveMinimum"
    type = "integer", "number"

    def validate(self):
        if type(self.value) != bool:
            raise ConfigError(self.path, "It must be a boolean")
        elif "minimum" not in self.rules:
            raise ConfigError(self.path, "It requires `minimum`")

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        pass


class ExclusiveMaximum(Keyword):
    name = "exclusiveMaximum"
    type = "integer", "number"

    def validate(self):
        if type(self.value) != bool:
            raise ConfigError(self.path, "It must be a boolean")
        elif "maximum" not in self.rules:
            raise ConfigError(self.path, "It requires `maximum`")

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        pass


# Object
class Properties(Keyword):
    name = "properties"
    type = "object"

    def validate(self):
        if type(self.value) != dict:
            raise ConfigError(self.path, "It must be an object")
        elif len(self.value.keys()) == 0:
            raise ConfigError(self.path, "It must be an object with at least one key-value pair")
        elif len(list(filter(lambda x: type(x) != str or len(x) == 0, self.value.keys()))) > 0:
            raise ConfigError(self.path, "It must be an object, where each key is a non-empty string")
        else:
            for key, value in self.value.items():
                if not self.schema.is_schema(value):
                    raise ConfigError(self.path + [key], "It must be a JSON Schema object")
                self.schema.program(value, self.path + [key])

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        for prop, schema in self.value.items():
            if prop in data:
                self.schema.program(schema, self.path + [prop]).check(data[prop], path + [prop], errors)


class AdditionalProperties(Keyword):
    name = "additionalProperties"
    type = "object"

    def validate(self):
        if not self.schema.is_schema(self.value) and type(self.value) != bool:
            raise ConfigError(self.path, "It must be a boolean or a JSON Schema object")
        elif self.schema.is_schema(self.value):
            self.schema.program(self.value, self.path)

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        if self.value is True:
            return
        known = self.rules["properties"].value if "properties" in self.rules else {}
        for prop in data:
            if prop in known:
                continue
            if self.value is False:
                errors.append(self.errors(path + [prop]))
            else:
                self.schema.program(self.value, self.path).check(data[prop], path + [prop], errors)


class Required(Keyword):
    name = "required"
    type = "object"

    def validate(self):
        if type(self.value) != list:
            raise ConfigError(self.path, "It must be an array")
        elif len(list(filter(lambda x: type(x) != str or len(x) == 0, self.value))) > 0:
            raise ConfigError(self.path, "It must be an array, where each element is a non-empty string")
        elif len(self.value) != len(set(self.value)):
            raise ConfigError(self.path, "It must be an array of strings, where each element is unique")

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        for field in self.value:
            if field not in data:
                errors.append(self.errors(path + [field]))


# String
class MinLength(Keyword):
    name = "minLength"
    type = "string"

    def validate(self):
        if type(self.value) != int:
            raise ConfigError(self.path, "It must be an integer")
        elif self.value < 0:
            raise ConfigError(self.path, "It must be a non-negative integer")

    def check(self, data: JSON, path: PATH, errors: ERRORS):
        if len(data) < self.value:
            errors.append(self.errors(path))
