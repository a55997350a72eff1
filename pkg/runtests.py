#!/usr/bin/env python

import argparse
import os
import sys

import django
from django.conf import settings
from django.test.utils import get_runner

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run the test suite with the Django test runner.")
    parser.add_argument("labels", nargs="*", default=["tests"], help="test modules, classes or methods")
    parser.add_argument("--failfast", action="store_true")
    parser.add_argument("--parallel", type=int, default=1)
    args = parser.parse_args()
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "tests.settings")
    django.setup()
    TestRunner = get_runner(settings)
    test_runner = TestRunner(failfast=args.failfast, parallel=args.parallel)
    failures = test_runner.run_tests(args.labels)
    if failures:
        sys.exit(1)
