# Configuration file for the Sphinx documentation builder.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html
import stokes_homog

# -- Project information -----------------------------------------------------

project = "stokes-homog"
copyright = "2024-present, stokes-homog developers"
author = "stokes-homog developers"

release = stokes_homog.__version__

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinxcontrib.apidoc",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
]

templates_path = ["_templates"]
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"

# sphinxcontrib.apidoc
apidoc_module_dir = "../src"
apidoc_output_dir = "reference/api"
apidoc_separate_modules = True
apidoc_toc_file = False

# sphinx.ext.intersphinx
intersphinx_mapping = {
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
    "pandas": ("https://pandas.pydata.org/docs/", None),
    "python": ("https://docs.python.org/3", None),
}

master_doc = "index"
