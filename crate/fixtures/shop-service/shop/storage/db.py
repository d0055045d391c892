import psycopg


def connect(url: str):
    return psycopg.connect(url)
