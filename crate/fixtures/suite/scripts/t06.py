def passt(r):
    return r["station"] == "Mythenquai" and r["datum"].startswith("2024-02")
total = sum(frame.filter(velozaehlung, passt)["anzahl_velo"])
final_answer(f"Im Februar 2024 wurden am Mythenquai {total} Velos gezählt.")
