anzahl = frame.group_by(baumkataster, "kreis").agg({"baum_id": "count"})
print(anzahl)
def ist_2024(r):
    return r["jahr"] == 2024
pop = frame.filter(bevoelkerung_kreis, ist_2024)
j = frame.join(anzahl, pop, "kreis")
def pro_kopf(r):
    return r["baum_id_count"] / r["einwohner"]
j = frame.with_column(j, "pro_kopf", pro_kopf)
top = frame.sort(j, "pro_kopf", descending=True)[0]
final_answer(f"Am meisten Bäume pro Einwohner hat der Stadtkreis {top['kreisname']} ({round(top['pro_kopf'] * 1000, 1)} Bäume pro 1000 Einwohner).")
