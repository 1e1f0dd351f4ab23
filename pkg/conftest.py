"""Configure Django for pytest the same way ``manage.py test`` does."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'impactlab.settings')
django.setup()
