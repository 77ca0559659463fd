# -*- coding: utf-8 -*-
#
# mcmcdb documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing dir.


import sys, os

sys.path.insert(0, os.path.abspath('..'))

# -- General configuration -----------------------------------------------------

extensions = ['sphinx.ext.autodoc']

templates_path = ['_templates']

source_suffix = '.rst'

master_doc = 'index'

project = u'mcmcdb'
copyright = u'2026, the mcmcdb developers'

# The short X.Y version.
version = '0.1'
# The full version, including alpha/beta/rc tags.
release = '0.1'

exclude_patterns = ['_build']

pygments_style = 'sphinx'

# -- Options for HTML output ---------------------------------------------------

html_theme = 'default'

html_static_path = ['_static']

htmlhelp_basename = 'mcmcdbdoc'

# -- Options for LaTeX output --------------------------------------------------

latex_documents = [
  ('index', 'mcmcdb.tex', u'mcmcdb Documentation',
   u'the mcmcdb developers', 'manual'),
]

# -- Options for manual page output --------------------------------------------

man_pages = [
    ('index', 'mcmcdb', u'mcmcdb Documentation',
     [u'the mcmcdb developers'], 1)
]
