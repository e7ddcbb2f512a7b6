"""Shared fixtures: the four bundled knowledge sets, parsed once per session."""

import pytest
from importlib import resources

from lockforge import analysis, instances, kernel, knowledge


BUNDLED = ("linked_list", "external_bst", "internal_bst", "external_rb")


class Bundle:
    """One bundled knowledge set with lazily computed instance and evaluator."""

    def __init__(self, name):
        self.name = name
        self.root = resources.files("lockforge") / "data" / name
        self.theory = knowledge.parse_theory((self.root / "theory.lp").read_text())
        self.operations = knowledge.parse_operations((self.root / "operations.lp").read_text())
        self._instance = None
        self._evaluator = None

    def text(self, filename):
        return (self.root / filename).read_text()

    def has_file(self, filename):
        return (self.root / filename).is_file()

    @property
    def evaluator(self):
        if self._evaluator is None:
            self._evaluator = kernel.Evaluator(self.theory)
        return self._evaluator

    @property
    def instance(self):
        if self._instance is None:
            if self.has_file("instance.lp"):
                self._instance = instances.parse_instance(self.text("instance.lp"), self.theory)
            else:
                search = analysis.find_maximal_instance(self.theory, self.operations, 6, self.evaluator)
                assert search.instance is not None
                self._instance = search.instance
        return self._instance

    def block(self, operation, block):
        return self.operations.operation(operation).blocks[block]


@pytest.fixture(scope="session")
def bundles():
    return {name: Bundle(name) for name in BUNDLED}


@pytest.fixture(scope="session")
def linked_list(bundles):
    return bundles["linked_list"]


@pytest.fixture(scope="session")
def external_bst(bundles):
    return bundles["external_bst"]


@pytest.fixture(scope="session")
def internal_bst(bundles):
    return bundles["internal_bst"]


@pytest.fixture(scope="session")
def external_rb(bundles):
    return bundles["external_rb"]
