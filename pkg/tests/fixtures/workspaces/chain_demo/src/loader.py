import csv


def load_rows(path):
    with open(path) as handle:
        return list(csv.DictReader(handle))
