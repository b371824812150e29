def ist_linie(r):
    return r["linie"] == 2
linie = frame.filter(tramlinien, ist_linie)[0]
km = round(geo.length(linie["geometry"]) / 1000, 2)
final_answer(f"Die Tramlinie 2 ist {km} km lang.")
