# Population estimators, one class per method
