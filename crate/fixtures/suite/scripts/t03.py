p = sum(parkplaetze_oeffentlich["anzahl"])
b = sum(parkplaetze_behinderte["anzahl"])
print(p, b)
anteil = round(b / p * 100, 2)
final_answer(f"Die {b} Behindertenparkplätze entsprechen {anteil} % der {p} öffentlichen Parkplätze.")
