//! JSON has no NaN or infinity; these fields are written as the strings
//! `"nan"`, `"inf"` and `"-inf"` instead.

pub mod float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("invalid float `{other}`"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    struct W {
        #[serde(with = "super::float")]
        v: f64,
    }

    #[test]
    fn non_finite_round_trip() {
        for v in [1.5, f64::INFINITY, f64::NEG_INFINITY] {
            let s = serde_json::to_string(&W { v }).unwrap();
            assert_eq!(serde_json::from_str::<W>(&s).unwrap().v, v);
        }
        let s = serde_json::to_string(&W { v: f64::NAN }).unwrap();
        assert_eq!(s, r#"{"v":"nan"}"#);
        assert!(serde_json::from_str::<W>(&s).unwrap().v.is_nan());
    }
}
