import numpy as np
import pytest
import scipy.sparse as sp

from cemf.core import InteractionMatrix

ACCEPTANCE_LINES = []


def random_counts(rng, n_users, n_items, density=0.4, max_count=5, binary=False):
    mask = rng.random((n_users, n_items)) < density
    counts = rng.integers(1, max_count + 1, size=(n_users, n_items))
    R = np.where(mask, 1 if binary else counts, 0).astype(float)
    return R


def to_matrix(R):
    return InteractionMatrix(sp.csr_matrix(R))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def synthetic_retail_csv(path, n_customers=60, n_items=40, n_clusters=4, seed=0):
    """Invoice lines where customers mostly buy from one item cluster."""
    rng = np.random.default_rng(seed)
    lines = ["InvoiceNo,StockCode,Description,Quantity,InvoiceDate,UnitPrice,CustomerID,Country"]
    invoice = 500000
    per = n_items // n_clusters
    for c in range(n_customers):
        home = c % n_clusters
        for _ in range(rng.integers(2, 6)):
            invoice += 1
            for _ in range(rng.integers(2, 6)):
                cl = home if rng.random() < 0.8 else rng.integers(n_clusters)
                item = cl * per + rng.integers(per)
                lines.append(f"{invoice},SKU{item},x,{rng.integers(1, 5)},2011-01-01,1.0,{10000 + c}.0,UK")
    lines.append(f"{invoice + 1},SKU0,x,3,2011-01-01,1.0,,UK")
    lines.append(f"C{invoice + 2},SKU1,x,-2,2011-01-01,1.0,10001.0,UK")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def retail_csv(tmp_path):
    return synthetic_retail_csv(tmp_path / "retail.csv")
