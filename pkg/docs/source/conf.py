#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# ksnslab documentation build configuration file.

import sys
import os

sys.path.insert(0, os.path.abspath('../../src'))

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
]

# Docstrings use ``:param x: (type)``; keep members in source order.
autodoc_member_order = 'bysource'

source_suffix = '.rst'
master_doc = 'index'

project = u'ksnslab'
copyright = u'2018, adnymics'
author = u'adnymics'

version = '1.0.0'
release = '1.0.0'

exclude_patterns = []
pygments_style = 'sphinx'

html_theme = 'sphinx_rtd_theme'
htmlhelp_basename = 'ksnslabdoc'

latex_documents = [
    (master_doc, 'ksnslab.tex', u'ksnslab Documentation', author, 'manual'),
]

man_pages = [
    (master_doc, 'ksnslab', u'ksnslab Documentation', [author], 1)
]

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
}
