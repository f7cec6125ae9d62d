use serde_json::{json, Map, Value};

use super::{BoundaryError, BoundarySet, PolygonShape, Ring};
use crate::geo::{parse_geo_key, GeoLevel, LonLat};

/// Reads an RFC 7946 FeatureCollection of Polygon / MultiPolygon features.
///
/// `id_property` names the feature property holding the geographic code; it
/// is parsed strictly at `level`.
pub fn load_geojson(bytes: &[u8], level: GeoLevel, id_property: &str) -> Result<BoundarySet, BoundaryError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| BoundaryError::MalformedJson(e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| BoundaryError::MalformedJson("top level is not an object".into()))?;
    if obj.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(BoundaryError::MalformedJson("top level is not a FeatureCollection".into()));
    }
    let features = obj
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| BoundaryError::MalformedJson("missing features array".into()))?;

    let mut set = BoundarySet::new(level, "");
    for (i, feature) in features.iter().enumerate() {
        let feature = feature
            .as_object()
            .ok_or_else(|| BoundaryError::MalformedJson(format!("feature {i} is not an object")))?;
        let key_text = feature
            .get("properties")
            .and_then(Value::as_object)
            .and_then(|props| props.get(id_property))
            .and_then(|v| match v {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .ok_or_else(|| BoundaryError::MissingIdProperty { feature: i, property: id_property.to_string() })?;
        let key = parse_geo_key(&key_text, level, false).map_err(|source| BoundaryError::InvalidKey { record: i, source })?;
        let shape = parse_geometry(feature.get("geometry"), i)?;
        set.insert(key, shape)?;
    }
    if set.is_empty() {
        return Err(BoundaryError::EmptySet);
    }
    Ok(set)
}

fn parse_geometry(geometry: Option<&Value>, feature: usize) -> Result<PolygonShape, BoundaryError> {
    let unsupported = |kind: &str| BoundaryError::UnsupportedGeometry { feature, kind: kind.to_string() };
    let geometry = match geometry {
        Some(Value::Object(g)) => g,
        _ => return Err(unsupported("null")),
    };
    let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("missing");
    let coords = geometry.get("coordinates");
    let malformed = || BoundaryError::MalformedJson(format!("feature {feature}: bad {kind} coordinates"));
    match kind {
        "Polygon" => {
            let rings = parse_polygon(coords.ok_or_else(malformed)?, feature)?;
            Ok(PolygonShape::from_polygons(vec![rings]))
        }
        "MultiPolygon" => {
            let polys = coords
                .and_then(Value::as_array)
                .ok_or_else(malformed)?
                .iter()
                .map(|p| parse_polygon(p, feature))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(PolygonShape::from_polygons(polys))
        }
        other => Err(unsupported(other)),
    }
}

fn parse_polygon(value: &Value, feature: usize) -> Result<Vec<Ring>, BoundaryError> {
    let malformed = || BoundaryError::MalformedJson(format!("feature {feature}: polygon is not an array of rings"));
    value
        .as_array()
        .ok_or_else(malformed)?
        .iter()
        .map(|ring| {
            let positions = ring.as_array().ok_or_else(malformed)?;
            let vertices = positions
                .iter()
                .map(|pos| {
                    let pair = pos.as_array().filter(|a| a.len() >= 2).ok_or_else(malformed)?;
                    let lon = pair[0].as_f64().ok_or_else(malformed)?;
                    let lat = pair[1].as_f64().ok_or_else(malformed)?;
                    LonLat::new(lon, lat).map_err(|source| BoundaryError::InvalidCoordinate { record: feature, source })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Ring::new(vertices))
        })
        .collect()
}

/// Serializes a layer as a FeatureCollection whose features carry the code
/// under `id_property`. Reloading the output yields an identical set.
pub fn to_geojson(set: &BoundarySet, id_property: &str) -> Vec<u8> {
    let features: Vec<Value> = set
        .iter()
        .map(|(key, shape)| {
            let mut polygons = Vec::with_capacity(shape.parts().len());
            let mut rings = shape.rings().iter();
            for &count in shape.parts() {
                let poly: Vec<Value> = rings
                    .by_ref()
                    .take(count)
                    .map(|r| Value::Array(r.vertices().iter().map(|v| json!([v.lon, v.lat])).collect()))
                    .collect();
                polygons.push(Value::Array(poly));
            }
            let geometry = if polygons.len() == 1 {
                json!({"type": "Polygon", "coordinates": polygons.pop().unwrap()})
            } else {
                json!({"type": "MultiPolygon", "coordinates": polygons})
            };
            let mut props = Map::new();
            props.insert(id_property.to_string(), Value::String(key.code().to_string()));
            json!({"type": "Feature", "properties": props, "geometry": geometry})
        })
        .collect();
    let doc = json!({"type": "FeatureCollection", "features": features});
    serde_json::to_vec(&doc).expect("geojson serialization")
}
