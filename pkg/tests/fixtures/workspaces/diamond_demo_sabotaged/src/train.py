from prep import clean


def fit(values):
    return sum(clean(values))
