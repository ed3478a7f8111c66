import os
import re
import unittest

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '../'))


def read(name):
    with open(os.path.join(ROOT, name)) as fh:
        return fh.read()


class TestDocsConfig(unittest.TestCase):
    def test_required_plugins_are_enabled(self):
        plugins = re.findall(r"^  - (\w+)", read("mkdocs.yml").split("\nplugins:", 1)[1], re.M)
        required = re.findall(r"^mkdocs-(\w+)-plugin", read("requirements-docs.txt"), re.M)
        self.assertIn("minify", required)
        for name in required:
            self.assertIn(name, plugins)


if __name__ == "__main__":
    unittest.main()
