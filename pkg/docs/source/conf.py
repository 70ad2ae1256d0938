# Configuration file for the Sphinx documentation builder.
#
# Only the settings this project changes from the Sphinx defaults are
# listed; see http://www.sphinx-doc.org/en/master/config for the rest.
import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join("..", "..")))

# -- Project information -----------------------------------------------------

project = "epidemic_testing"
copyright = "2022, Met Office"
author = "Met Office"

release = "0.1.0"

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.intersphinx",
]

# the package docstrings use :param: fields; keep signatures compact
autodoc_member_order = "bysource"
autodoc_mock_imports = ["afterburner", "numpy", "pandas", "pyswarms", "scipy"]

source_suffix = ".rst"
master_doc = "index"
language = "en"
exclude_patterns = []

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
htmlhelp_basename = "epidemic_testingdoc"

# -- Options for manual page output ------------------------------------------

man_pages = [
    (
        master_doc,
        "epidemic_testing",
        "epidemic_testing Documentation",
        [author],
        1,
    )
]

# -- Extension configuration -------------------------------------------------

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "pandas": ("https://pandas.pydata.org/docs", None),
    "scipy": ("https://docs.scipy.org/doc/scipy", None),
}
