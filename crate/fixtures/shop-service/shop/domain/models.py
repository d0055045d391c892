from dataclasses import dataclass, field
from decimal import Decimal


@dataclass
class Product:
    sku: str
    name: str
    price: Decimal


@dataclass
class Cart:
    items: list = field(default_factory=list)

    def total(self) -> Decimal:
        return sum((p.price for p in self.items), Decimal("0")).quantize(Decimal("0.01"))
