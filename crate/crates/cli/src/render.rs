//! JSON and CSV renderings of library values.

use num_rational::BigRational;
use serde_json::{json, Value};
use tortf::chargroup::CycNumber;
use tortf::transfer::{Atom, PackagedForm, SummationReport};

/// `{modulus, coefficients, denominator, text}`: `Σ coefficients[k] ζ^k / denominator`.
pub fn cyc(x: &CycNumber) -> Value {
    let (num, den) = x.to_parts();
    json!({
        "modulus": x.modulus(),
        "coefficients": num,
        "denominator": den,
        "text": x.to_string(),
    })
}

pub fn rational(r: &BigRational) -> Value {
    Value::String(r.to_string())
}

pub fn atoms(list: &[Atom]) -> Value {
    Value::Array(
        list.iter()
            .map(|a| json!({ "location": a.location.render(), "weight": rational(&a.weight) }))
            .collect(),
    )
}

pub fn report(r: &SummationReport) -> Value {
    json!({
        "stratum_sums": r.stratum_sums.iter().map(cyc).collect::<Vec<_>>(),
        "partial_sums": r.partial_sums.iter().map(cyc).collect::<Vec<_>>(),
        "stabilization": r.stabilization,
        "certified": r.stabilization.is_some(),
        "certificate": r.certificate,
    })
}

pub fn packaged(p: &PackagedForm) -> Value {
    json!({
        "exponent": p.exponent,
        "stated": { "E": rational(&p.e_stated), "C": rational(&p.c_stated), "value": rational(&p.stated) },
        "exact": { "E": rational(&p.e_exact), "C": rational(&p.c_exact), "value": rational(&p.exact) },
        "stated_minus_sum": rational(&p.diff),
    })
}

/// Writes a header and records as CSV to a string.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyc_round_trips_through_json_text() {
        let x = CycNumber::root_of_unity(6, 1).scale_int(3);
        let v = cyc(&x);
        let back: Value = serde_json::from_str(&v.to_string()).unwrap();
        assert_eq!(back["modulus"], 6);
        assert_eq!(back["denominator"], "1");
        assert_eq!(back, v);
    }

    #[test]
    fn csv_has_header_and_quotes() {
        let s = csv_table(&["a", "b"], &[vec!["1".into(), "x,y".into()]]);
        assert_eq!(s, "a,b\n1,\"x,y\"\n");
    }
}
