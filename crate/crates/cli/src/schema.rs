//! Minimal JSON Schema checker for the shipped report schema.
//!
//! Supports the subset the report schema uses: `type`, `properties`,
//! `required`, `additionalProperties`, `items`, `enum`, `oneOf`, `minimum`,
//! `maximum`, `minItems`, and `$ref` into `#/$defs`. Validation failures
//! carry the instance path of the offending value.

use serde_json::Value;

/// Validates `instance` against `schema`, resolving `$ref` against the
/// schema's own `$defs` table.
pub fn validate(schema: &Value, instance: &Value) -> Result<(), String> {
    check(schema, schema, instance, "$")
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) => {
            if n.is_u64() || n.is_i64() {
                "integer"
            } else {
                "number"
            }
        }
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn matches_type(want: &str, v: &Value) -> bool {
    match want {
        "number" => matches!(v, Value::Number(_)),
        "integer" => match v {
            Value::Number(n) => {
                n.is_u64() || n.is_i64() || n.as_f64().is_some_and(|x| x.fract() == 0.0)
            }
            _ => false,
        },
        other => other == type_name(v),
    }
}

fn resolve<'a>(root: &'a Value, schema: &'a Value) -> Result<&'a Value, String> {
    let Some(reference) = schema.get("$ref").and_then(Value::as_str) else {
        return Ok(schema);
    };
    let name = reference
        .strip_prefix("#/$defs/")
        .ok_or_else(|| format!("unsupported $ref '{reference}'"))?;
    root.get("$defs")
        .and_then(|d| d.get(name))
        .ok_or_else(|| format!("dangling $ref '{reference}'"))
}

fn check(root: &Value, schema: &Value, instance: &Value, path: &str) -> Result<(), String> {
    let schema = resolve(root, schema)?;

    if let Some(types) = schema.get("type") {
        let ok = match types {
            Value::String(t) => matches_type(t, instance),
            Value::Array(ts) => ts
                .iter()
                .filter_map(Value::as_str)
                .any(|t| matches_type(t, instance)),
            _ => return Err(format!("{path}: schema 'type' must be a string or array")),
        };
        if !ok {
            return Err(format!(
                "{path}: expected type {types}, got {}",
                type_name(instance)
            ));
        }
    }

    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(instance) {
            return Err(format!("{path}: value not in enum"));
        }
    }

    if let Some(variants) = schema.get("oneOf").and_then(Value::as_array) {
        let hits = variants
            .iter()
            .filter(|v| check(root, v, instance, path).is_ok())
            .count();
        if hits != 1 {
            return Err(format!("{path}: matched {hits} oneOf variants, need exactly 1"));
        }
    }

    if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
        if let Some(x) = instance.as_f64() {
            if x < min {
                return Err(format!("{path}: {x} is below minimum {min}"));
            }
        }
    }
    if let Some(max) = schema.get("maximum").and_then(Value::as_f64) {
        if let Some(x) = instance.as_f64() {
            if x > max {
                return Err(format!("{path}: {x} is above maximum {max}"));
            }
        }
    }

    if let Value::Object(map) = instance {
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for name in required.iter().filter_map(Value::as_str) {
                if !map.contains_key(name) {
                    return Err(format!("{path}: missing required property '{name}'"));
                }
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        if let Some(props) = props {
            for (name, sub) in props {
                if let Some(v) = map.get(name) {
                    check(root, sub, v, &format!("{path}.{name}"))?;
                }
            }
        }
        match schema.get("additionalProperties") {
            Some(Value::Bool(false)) => {
                for name in map.keys() {
                    if !props.is_some_and(|p| p.contains_key(name)) {
                        return Err(format!("{path}: unexpected property '{name}'"));
                    }
                }
            }
            Some(Value::Bool(true)) | None => {}
            Some(sub) => {
                for (name, v) in map {
                    if !props.is_some_and(|p| p.contains_key(name)) {
                        check(root, sub, v, &format!("{path}.{name}"))?;
                    }
                }
            }
        }
    }

    if let Value::Array(items) = instance {
        if let Some(min) = schema.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min {
                return Err(format!("{path}: {} items, need at least {min}", items.len()));
            }
        }
        if let Some(sub) = schema.get("items") {
            for (i, v) in items.iter().enumerate() {
                check(root, sub, v, &format!("{path}[{i}]"))?;
            }
        }
    }

    Ok(())
}
