import logging
from collections import defaultdict
from typing import Dict, List, Set, Type

from ububu.config.keyword import Keyword
from ububu.config.keywords import (
    AdditionalProperties,
    Enum,
    ExclusiveMaximum,
    ExclusiveMinimum,
    Items,
    Maximum,
    Minimum,
    MinItems,
    MinLength,
    MultipleOf,
    Properties,
    Required,
    Type as TypeKeyword,
    json_type,
)
from ububu.errors import ConfigError
from ububu.utils import ERRORS, JSON, PATH

logger = logging.getLogger(__name__)


class Program:
    """Keywords of one (sub)schema: general ones always apply, typed ones only to data of their type."""

    def __init__(self, general_rules: List[Keyword] = None, type_specific_rules: Dict[str, List[Keyword]] = None):
        self.general_rules = general_rules or []
        self.type_specific_rules = type_specific_rules or {}

    def check(self, data: JSON, path: PATH, errors: ERRORS) -> None:
        for rule in self.general_rules:
            rule.check(data, path, errors)
        actual = json_type(data)
        rules = self.type_specific_rules.get(actual, [])
        if actual == "integer":
            rules = rules + [r for r in self.type_specific_rules.get("number", []) if r not in rules]
        for rule in rules:
            rule.check(data, path, errors)


class Schema:
    def __init__(self):
        self.keywords: Dict[str, Type[Keyword]] = {
            # General
            Enum.name: Enum,
            TypeKeyword.name: TypeKeyword,
            # Array
            Items.name: Items,
            MinItems.name: MinItems,
            # Integer, Number
            Minimum.name: Minimum,
            Maximum.name: Maximum,
            MultipleOf.name: MultipleOf,
            ExclusiveMinimum.name: ExclusiveMinimum,
            ExclusiveMaximum.name: ExclusiveMaximum,
            # Object
            Properties.name: Properties,
            AdditionalProperties.name: AdditionalProperties,
            Required.name: Required,
            # String
            MinLength.name: MinLength,
        }
        self._programs: Dict[int, Program] = {}

    @staticmethod
    def is_schema(value: JSON):
        return isinstance(value, dict)

    def _type_definition(self, keywords: Dict[str, Keyword]) -> Set:
        if "type" in keywords:
            return keywords["type"].types
        else:
            return set()

    def _delete_unused_keywords(self, keywords: Dict[str, Keyword], path: PATH):
        type_definition = self._type_definition(keywords)
        if "number" in type_definition:
            type_definition = type_definition | {"integer"}
        if type_definition:
            for key in list(keywords.keys()):
                rule = keywords[key]
                if rule.type:
                    types = set(rule.type) if type(rule.type) == tuple else {rule.type}
                    if not types & type_definition:
                        logger.warning(f"`{'.'.join((str(p) for p in path + [rule.name]))}` keyword will never be used")
                        del keywords[key]

    def _program(self, keywords: Dict[str, Keyword]) -> Program:
        general_rules: List[Keyword] = []
        type_specific_rules: Dict[str, List[Keyword]] = defaultdict(list)
        for keyword in keywords.values():
            if not keyword.type:
                general_rules.append(keyword)
            else:
                for t in (keyword.type if type(keyword.type) == tuple else [keyword.type]):
                    type_specific_rules[t].append(keyword)
        return Program(general_rules, dict(type_specific_rules))

    def program(self, schema: dict, path: PATH = None) -> Program:
        if not self.is_schema(schema):
            raise ConfigError(path or [], "Invalid JSON Schema")

        if id(schema) in self._programs:
            return self._programs[id(schema)]

        path = path or []

        keywords: Dict[str, Keyword] = {}
        for key, value in schema.items():
            if key in self.keywords:
                keywords[key] = self.keywords[key](value, self, path + [key], keywords)

        for keyword in keywords.values():
            keyword.validate()

        self._delete_unused_keywords(keywords, path)

        program = self._program(keywords)
        self._programs[id(schema)] = program
        return program
